//! Amplitude-alignment game on separable toy spectra (scale 1 vs 10).
//!
//! Phase one trains the discriminator against a frozen generator; phase two
//! lets both play and reports how discriminator accuracy falls back toward
//! chance as the generator learns the target scale.
//!
//!     cargo run --release --example adversarial_toy -- [seed]

use freqalign::adversarial::{toy_amplitudes, AdversarialConfig, AdversarialTrainer, Discriminator, Generator};
use freqalign::rng::{substream, Stream};

fn main() -> freqalign::Result<()> {
    let seed: u64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(0);
    let mut init = substream(seed, Stream::Init);
    let generator = Generator::new(1, &mut init);
    let discriminator = Discriminator::new(1, &mut init);
    let mut trainer = AdversarialTrainer::new(generator, discriminator, AdversarialConfig::default());
    let mut data = substream(seed, Stream::Adversarial);

    let (batch, size) = (16, 16);
    let mut window = Vec::new();
    for step in 1..=2200 {
        let a_s = toy_amplitudes(&mut data, batch, size, 1.0);
        let a_t = toy_amplitudes(&mut data, batch, size, 10.0);
        let report = trainer.step(&a_s, &a_t, step > 200)?;
        window.push(report.d_acc);
        if step % 50 == 0 {
            let acc = window.iter().sum::<f64>() / window.len() as f64;
            println!(
                "step {step:5}  phase {}  d_loss {:.4}  g_loss {:.4}  d_acc(50) {:.3}",
                if step > 200 { "adversarial" } else { "frozen-G" },
                report.d_loss,
                report.g_loss,
                acc
            );
            window.clear();
        }
    }
    Ok(())
}
