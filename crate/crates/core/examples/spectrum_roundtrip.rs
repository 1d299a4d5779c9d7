//! Decompose images into amplitude and phase, rebuild them, and check
//! Parseval's identity. 64×32 runs entirely on the radix-2 path, 48×40 on
//! direct evaluation, and 17×64 mixes the two.

use freqalign::spectral::{decompose, fft2d, recompose};
use freqalign::tensor::Tensor;

fn check(h: usize, w: usize) -> freqalign::Result<()> {
    let data: Vec<f64> = (0..h * w)
        .map(|i| {
            let (y, x) = ((i / w) as f64, (i % w) as f64);
            0.5 + 0.3 * (0.2 * x).sin() * (0.13 * y).cos() + 0.1 * ((i * 7919 % 101) as f64 / 101.0 - 0.5)
        })
        .collect();
    let img = Tensor::new(vec![1, h, w], data)?;

    let spec = decompose(&img)?;
    let back = recompose(&spec)?;
    let err = img.data().iter().zip(back.data().iter()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);

    let energy: f64 = img.data().iter().map(|v| v * v).sum();
    let spectral: f64 = fft2d(&img)?.data.iter().map(|z| z.norm_sqr()).sum::<f64>() / (h * w) as f64;

    let centered = spec.center_shift()?;
    let dc = centered.amplitude[(h / 2) * w + w / 2];
    println!(
        "{h:3}x{w:<3} round-trip max err {err:.2e}  Parseval rel err {:.2e}  DC amplitude {dc:.3} (= sum of pixels)",
        (energy - spectral).abs() / energy
    );
    Ok(())
}

fn main() -> freqalign::Result<()> {
    check(48, 40)?;
    check(64, 32)?;
    check(17, 64)?;
    Ok(())
}
