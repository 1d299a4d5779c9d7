//! Source-target frequency fusion.
//!
//! Low-frequency amplitudes of a source and a target image are blended with
//! a mixing coefficient `α`; the source phase is kept untouched, so the
//! fused image keeps the source's structure (and label) while taking on
//! part of the target's intensity style.

use rand::Rng as _;

use crate::error::{Error, Result};
use crate::rng::{substream, Rng, Stream};
use crate::spectral::{decompose, recompose, Layout, Spectrum};
use crate::tensor::Tensor;

/// How the mixing coefficient is chosen for each fused sample.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum AlphaMode {
    Fixed(f64),
    /// `α ~ U(0, 1)`, drawn per sample.
    Uniform,
}

/// Which domain supplies amplitudes outside the low-frequency block.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum HighFrequencySource {
    #[default]
    Source,
    Target,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FusionConfig {
    /// Low-frequency block half-width as a fraction of `min(H, W)`, in `(0, 0.5]`.
    pub beta: f64,
    pub alpha: AlphaMode,
    pub high_freq: HighFrequencySource,
    /// Clamp the recomposed image into `[0, 1]`.
    pub clamp_output: bool,
    pub seed: u64,
}

impl Default for FusionConfig {
    fn default() -> Self {
        FusionConfig {
            beta: 0.1,
            alpha: AlphaMode::Uniform,
            high_freq: HighFrequencySource::Source,
            clamp_output: true,
            seed: 0,
        }
    }
}

impl FusionConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.beta > 0.0 && self.beta <= 0.5) {
            return Err(Error::config(format!("beta must lie in (0, 0.5], got {}", self.beta)));
        }
        if let AlphaMode::Fixed(a) = self.alpha {
            if !(0.0..=1.0).contains(&a) {
                return Err(Error::config(format!("alpha must lie in [0, 1], got {a}")));
            }
        }
        Ok(())
    }

    pub fn draw_alpha(&self, rng: &mut Rng) -> f64 {
        match self.alpha {
            AlphaMode::Fixed(a) => a,
            AlphaMode::Uniform => rng.gen::<f64>(),
        }
    }
}

/// Boolean `[H, W]` mask of the centered low-frequency square.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LowFrequencyMask {
    pub height: usize,
    pub width: usize,
    pub bits: Vec<bool>,
}

impl LowFrequencyMask {
    pub fn get(&self, y: usize, x: usize) -> bool {
        self.bits[y * self.width + x]
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    /// True when the mask equals its point reflection through the centre bin.
    pub fn is_centrally_symmetric(&self) -> bool {
        let (h, w) = (self.height, self.width);
        let (cy, cx) = (h / 2, w / 2);
        (0..h).all(|y| {
            (0..w).all(|x| {
                let my = (2 * cy + h - y) % h;
                let mx = (2 * cx + w - x) % w;
                self.get(y, x) == self.get(my, mx)
            })
        })
    }
}

/// Centered square of side `2·⌊β·min(H,W)⌋ + 1`, clipped to the array.
pub fn lf_mask(height: usize, width: usize, beta: f64) -> Result<LowFrequencyMask> {
    if !(beta > 0.0 && beta <= 0.5) {
        return Err(Error::config(format!("beta must lie in (0, 0.5], got {beta}")));
    }
    let r = (beta * height.min(width) as f64).floor() as usize;
    let (cy, cx) = (height / 2, width / 2);
    let rows = cy.saturating_sub(r)..=(cy + r).min(height - 1);
    let cols = cx.saturating_sub(r)..=(cx + r).min(width - 1);
    let bits = (0..height * width)
        .map(|i| rows.contains(&(i / width)) && cols.contains(&(i % width)))
        .collect();
    Ok(LowFrequencyMask { height, width, bits })
}

fn check_pair(source: &Spectrum, target: &Spectrum, mask: &LowFrequencyMask) -> Result<()> {
    if source.layout != Layout::Centered || target.layout != Layout::Centered {
        return Err(Error::usage("amplitude fusion needs both spectra in centered layout"));
    }
    if source.shape() != target.shape() {
        return Err(Error::usage(format!(
            "spectrum shapes differ: {:?} vs {:?}",
            source.shape(),
            target.shape()
        )));
    }
    if (mask.height, mask.width) != (source.height, source.width) {
        return Err(Error::usage("low-frequency mask does not match spectrum extent"));
    }
    Ok(())
}

/// `α·A_s + (1−α)·A_t` inside the mask, `A_s` outside.
pub fn fuse_amplitude(source: &Spectrum, target: &Spectrum, alpha: f64, mask: &LowFrequencyMask) -> Result<Vec<f64>> {
    fuse_amplitude_with(source, target, alpha, mask, HighFrequencySource::Source)
}

pub fn fuse_amplitude_with(
    source: &Spectrum,
    target: &Spectrum,
    alpha: f64,
    mask: &LowFrequencyMask,
    high_freq: HighFrequencySource,
) -> Result<Vec<f64>> {
    check_pair(source, target, mask)?;
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::usage(format!("alpha must lie in [0, 1], got {alpha}")));
    }
    let plane = source.height * source.width;
    Ok(source
        .amplitude
        .iter()
        .zip(&target.amplitude)
        .enumerate()
        .map(|(i, (&a_s, &a_t))| {
            if mask.bits[i % plane] {
                alpha * a_s + (1.0 - alpha) * a_t
            } else {
                match high_freq {
                    HighFrequencySource::Source => a_s,
                    HighFrequencySource::Target => a_t,
                }
            }
        })
        .collect())
}

/// Result of fusing one source/target pair.
#[derive(Clone, Debug)]
pub struct FusedPair {
    pub fused_image: Tensor,
    pub alpha_used: f64,
    pub lf_mask: LowFrequencyMask,
    /// Fused spectrum (centered) before recomposition; its phase is the source phase.
    pub spectrum: Spectrum,
}

/// Fuse two already decomposed images given a realised `α`.
///
/// `source` may carry a substituted amplitude (for instance a generated one);
/// its phase is always what the fused spectrum keeps.
pub fn fuse_spectra(
    source: &Spectrum,
    target: &Spectrum,
    alpha: f64,
    cfg: &FusionConfig,
) -> Result<FusedPair> {
    cfg.validate()?;
    let s = match source.layout {
        Layout::Natural => source.center_shift()?,
        Layout::Centered => source.clone(),
    };
    let t = match target.layout {
        Layout::Natural => target.center_shift()?,
        Layout::Centered => target.clone(),
    };
    let mask = lf_mask(s.height, s.width, cfg.beta)?;
    let amplitude = fuse_amplitude_with(&s, &t, alpha, &mask, cfg.high_freq)?;
    let spectrum = Spectrum { amplitude, phase: s.phase.clone(), ..s };
    let mut image = recompose(&spectrum)?;
    if cfg.clamp_output {
        let clamped: Vec<f64> = image.data().iter().map(|v| v.clamp(0.0, 1.0)).collect();
        image = Tensor::new(image.shape().to_vec(), clamped)?;
    }
    Ok(FusedPair { fused_image: image, alpha_used: alpha, lf_mask: mask, spectrum })
}

/// Full fusion pipeline on `[C, H, W]` images with an explicit `α`.
pub fn stff_with_alpha(x_s: &Tensor, x_t: &Tensor, alpha: f64, cfg: &FusionConfig) -> Result<FusedPair> {
    if x_s.shape() != x_t.shape() {
        return Err(Error::usage(format!(
            "source and target images differ in shape: {:?} vs {:?}; resample first",
            x_s.shape(),
            x_t.shape()
        )));
    }
    fuse_spectra(&decompose(x_s)?, &decompose(x_t)?, alpha, cfg)
}

/// Stateful fusion operator owning the `α` stream.
#[derive(Debug, Clone)]
pub struct FrequencyFusion {
    pub cfg: FusionConfig,
    rng: Rng,
}

impl FrequencyFusion {
    pub fn new(cfg: FusionConfig) -> Result<Self> {
        cfg.validate()?;
        let rng = substream(cfg.seed, Stream::Alpha);
        Ok(FrequencyFusion { cfg, rng })
    }

    /// Draw the next `α` without fusing (keeps streams aligned when a
    /// caller fuses pre-decomposed spectra itself).
    pub fn next_alpha(&mut self) -> f64 {
        self.cfg.draw_alpha(&mut self.rng)
    }

    pub fn fuse(&mut self, x_s: &Tensor, x_t: &Tensor) -> Result<FusedPair> {
        let alpha = self.next_alpha();
        stff_with_alpha(x_s, x_t, alpha, &self.cfg)
    }
}

/// One-shot fusion: the first `α` of the configured stream.
pub fn stff(x_s: &Tensor, x_t: &Tensor, cfg: &FusionConfig) -> Result<FusedPair> {
    FrequencyFusion::new(cfg.clone())?.fuse(x_s, x_t)
}
