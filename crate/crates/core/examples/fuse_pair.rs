//! Blend the low-frequency amplitude of a synthetic target-domain image into
//! a source-domain image for a few values of `α` and write the results.
//!
//!     cargo run --release --example fuse_pair -- [out_dir]

use std::path::PathBuf;

use freqalign::data::{synth_dataset, SynthConfig};
use freqalign::fusion::{stff_with_alpha, FusionConfig};
use freqalign::io::{spectrum_heatmap, write_png};

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn main() -> freqalign::Result<()> {
    let out = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "fuse_pair_out".into()));
    std::fs::create_dir_all(&out)?;
    let cfg = SynthConfig { n_source: 1, n_target: 1, n_val: 1, ..SynthConfig::default() };
    let data = synth_dataset(&cfg)?;
    let (xs, xt) = (&data.source[0].image, &data.target[0].image);
    write_png(&out.join("source.png"), xs)?;
    write_png(&out.join("target.png"), xt)?;
    println!("source mean {:.3}   target mean {:.3}", mean(&xs.data()), mean(&xt.data()));

    let fusion = FusionConfig::default();
    for alpha in [1.0, 0.75, 0.5, 0.25, 0.0] {
        let pair = stff_with_alpha(xs, xt, alpha, &fusion)?;
        let name = format!("fused_a{:03}", (alpha * 100.0) as u32);
        write_png(&out.join(format!("{name}.png")), &pair.fused_image)?;
        write_png(&out.join(format!("{name}_spectrum.png")), &spectrum_heatmap(&pair.spectrum)?)?;
        println!(
            "alpha {alpha:.2}: fused mean {:.3}, {} low-frequency bins mixed",
            mean(&pair.fused_image.data()),
            pair.lf_mask.count()
        );
    }
    println!("images in {}", out.display());
    Ok(())
}
