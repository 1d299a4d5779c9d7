//! Samples, resampling, and a synthetic two-domain segmentation task.
//!
//! The synthetic task renders the same family of foreground shapes twice:
//! once with the source intensity profile and once through a target style
//! transform (global gain and bias, a smooth illumination ramp, stronger
//! noise). Structure is shared between the domains and only the intensity
//! style differs.

use std::f64::consts::PI;

use rand::Rng as _;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::rng::{substream, Rng, Stream};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Domain {
    Source,
    Target,
}

/// One image, its optional binary mask and provenance.
#[derive(Clone, Debug)]
pub struct SampleRecord {
    /// `[C, H, W]` with values in `[0, 1]`.
    pub image: Tensor,
    /// `[1, H, W]` binary.
    pub mask: Option<Tensor>,
    pub domain: Domain,
    pub id: String,
}

impl SampleRecord {
    pub fn dims(&self) -> (usize, usize, usize) {
        let s = self.image.shape();
        (s[0], s[1], s[2])
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ShapeFamily {
    Ellipse,
    Vessel,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IntensityProfile {
    pub foreground: f64,
    pub background: f64,
    pub noise: f64,
}

/// Applied on top of the source rendering to produce the target domain.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TargetStyle {
    pub gain: f64,
    pub bias: f64,
    /// Peak-to-peak amplitude of a linear illumination ramp in a random direction.
    pub illumination: f64,
    pub noise: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SynthConfig {
    pub size: usize,
    pub channels: usize,
    pub shape: ShapeFamily,
    pub source: IntensityProfile,
    pub target: TargetStyle,
    pub n_source: usize,
    pub n_target: usize,
    pub n_val: usize,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            size: 64,
            channels: 1,
            shape: ShapeFamily::Ellipse,
            source: IntensityProfile { foreground: 0.8, background: 0.2, noise: 0.05 },
            target: TargetStyle { gain: 0.5, bias: 0.45, illumination: 0.3, noise: 0.08 },
            n_source: 100,
            n_target: 60,
            n_val: 40,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.size == 0 || self.size % 16 != 0 {
            return Err(Error::config(format!("synth size must be a positive multiple of 16, got {}", self.size)));
        }
        if self.channels != 1 && self.channels != 3 {
            return Err(Error::config(format!("synth channels must be 1 or 3, got {}", self.channels)));
        }
        if self.n_source == 0 || self.n_target == 0 || self.n_val == 0 {
            return Err(Error::config("synth split counts must be at least 1"));
        }
        if self.source.noise < 0.0 || self.target.noise < 0.0 {
            return Err(Error::config("noise levels must be non-negative"));
        }
        Ok(())
    }
}

/// The three splits of a synthetic task.
#[derive(Clone, Debug)]
pub struct SynthDataset {
    /// Labelled source samples.
    pub source: Vec<SampleRecord>,
    /// Unlabelled target samples used for alignment.
    pub target: Vec<SampleRecord>,
    /// Labelled target samples held out for evaluation.
    pub target_val: Vec<SampleRecord>,
}

const TINT: [f64; 3] = [1.0, 0.9, 0.8];

fn render_mask(shape: ShapeFamily, size: usize, rng: &mut Rng) -> Vec<f64> {
    let s = size as f64;
    match shape {
        ShapeFamily::Ellipse => {
            let cx = rng.gen_range(0.3..0.7) * s;
            let cy = rng.gen_range(0.3..0.7) * s;
            let a = rng.gen_range(0.1..0.25) * s;
            let b = rng.gen_range(0.1..0.25) * s;
            let theta = rng.gen_range(0.0..PI);
            let (sin, cos) = theta.sin_cos();
            (0..size * size)
                .map(|i| {
                    let (y, x) = ((i / size) as f64 + 0.5 - cy, (i % size) as f64 + 0.5 - cx);
                    let u = x * cos + y * sin;
                    let v = -x * sin + y * cos;
                    if (u / a).powi(2) + (v / b).powi(2) <= 1.0 {
                        1.0
                    } else {
                        0.0
                    }
                })
                .collect()
        }
        ShapeFamily::Vessel => {
            // a few smooth curves crossing the field, a couple of pixels thick
            let mut mask = vec![0.0; size * size];
            let branches = rng.gen_range(2..=3);
            for _ in 0..branches {
                let horizontal = rng.gen_bool(0.5);
                let offset = rng.gen_range(0.2..0.8) * s;
                let amp = rng.gen_range(0.05..0.2) * s;
                let freq = rng.gen_range(0.5..2.0) * 2.0 * PI / s;
                let phase = rng.gen_range(0.0..2.0 * PI);
                let half_width = rng.gen_range(1.0..2.2);
                for i in 0..size * size {
                    let (y, x) = ((i / size) as f64 + 0.5, (i % size) as f64 + 0.5);
                    let (along, across) = if horizontal { (x, y) } else { (y, x) };
                    let centre = offset + amp * (freq * along + phase).sin();
                    // vertical distance scaled by the local slope approximates
                    // the distance to the curve
                    let slope = amp * freq * (freq * along + phase).cos();
                    if (across - centre).abs() / (1.0 + slope * slope).sqrt() <= half_width {
                        mask[i] = 1.0;
                    }
                }
            }
            mask
        }
    }
}

fn render_source(mask: &[f64], cfg: &SynthConfig, rng: &mut Rng) -> Vec<f64> {
    let p = cfg.source;
    let noise = Normal::new(0.0, p.noise.max(0.0)).expect("noise sigma");
    let mut out = Vec::with_capacity(cfg.channels * mask.len());
    for c in 0..cfg.channels {
        let tint = if cfg.channels == 1 { 1.0 } else { TINT[c] };
        for &m in mask {
            let base = if m > 0.5 { p.foreground } else { p.background } * tint;
            let n = if p.noise > 0.0 { noise.sample(rng) } else { 0.0 };
            out.push((base + n).clamp(0.0, 1.0));
        }
    }
    out
}

fn render_target(mask: &[f64], cfg: &SynthConfig, rng: &mut Rng) -> Vec<f64> {
    let p = cfg.source;
    let st = cfg.target;
    let size = cfg.size;
    let direction = rng.gen_range(0.0..2.0 * PI);
    let (dy, dx) = direction.sin_cos();
    let noise = Normal::new(0.0, st.noise.max(0.0)).expect("noise sigma");
    let mut out = Vec::with_capacity(cfg.channels * mask.len());
    for c in 0..cfg.channels {
        let tint = if cfg.channels == 1 { 1.0 } else { TINT[c] };
        for (i, &m) in mask.iter().enumerate() {
            let base = if m > 0.5 { p.foreground } else { p.background } * tint;
            // ramp in [-0.5, 0.5] along the chosen direction
            let (y, x) = ((i / size) as f64 / size as f64 - 0.5, (i % size) as f64 / size as f64 - 0.5);
            let ramp = (x * dx + y * dy) / std::f64::consts::SQRT_2;
            let n = if st.noise > 0.0 { noise.sample(rng) } else { 0.0 };
            out.push((st.gain * base + st.bias + st.illumination * ramp + n).clamp(0.0, 1.0));
        }
    }
    out
}

fn make_sample(cfg: &SynthConfig, domain: Domain, labelled: bool, id: String, rng: &mut Rng) -> Result<SampleRecord> {
    let n = cfg.size;
    let mask = render_mask(cfg.shape, n, rng);
    let pixels = match domain {
        Domain::Source => render_source(&mask, cfg, rng),
        Domain::Target => render_target(&mask, cfg, rng),
    };
    Ok(SampleRecord {
        image: Tensor::new(vec![cfg.channels, n, n], pixels)?,
        mask: if labelled { Some(Tensor::new(vec![1, n, n], mask)?) } else { None },
        domain,
        id,
    })
}

/// Deterministic source / target / target-validation splits.
pub fn synth_dataset(cfg: &SynthConfig) -> Result<SynthDataset> {
    cfg.validate()?;
    let mut rng = substream(cfg.seed, Stream::Data);
    let seed = cfg.seed;
    let source = (0..cfg.n_source)
        .map(|i| make_sample(cfg, Domain::Source, true, format!("s{seed}-src-{i:04}"), &mut rng))
        .collect::<Result<_>>()?;
    let target = (0..cfg.n_target)
        .map(|i| make_sample(cfg, Domain::Target, false, format!("s{seed}-tgt-{i:04}"), &mut rng))
        .collect::<Result<_>>()?;
    let target_val = (0..cfg.n_val)
        .map(|i| make_sample(cfg, Domain::Target, true, format!("s{seed}-val-{i:04}"), &mut rng))
        .collect::<Result<_>>()?;
    Ok(SynthDataset { source, target, target_val })
}

fn nearest_index(i: usize, src: usize, dst: usize) -> usize {
    (((i as f64 + 0.5) * src as f64 / dst as f64).floor() as usize).min(src - 1)
}

/// Resize a record: bilinear for the image, nearest-neighbour for the mask.
pub fn resample_to(record: &SampleRecord, size: (usize, usize)) -> Result<SampleRecord> {
    let (h, w) = size;
    if h == 0 || w == 0 || h % 16 != 0 || w % 16 != 0 {
        return Err(Error::usage(format!("resample target {h}x{w} must be a positive multiple of 16")));
    }
    let (c, ih, iw) = record.dims();
    if (ih, iw) == (h, w) {
        return Ok(record.clone());
    }
    let batched = record.image.reshape(vec![1, c, ih, iw])?;
    let image = Tensor::new(vec![c, h, w], batched.bilinear_resample(h, w)?.to_vec())?;
    let mask = match &record.mask {
        Some(m) => {
            let &[mc, mh, mw] = m.shape() else {
                return Err(Error::shape(format!("mask must be [1, H, W], got {:?}", m.shape())));
            };
            let src = m.data();
            let mut out = Vec::with_capacity(mc * h * w);
            for ch in 0..mc {
                for y in 0..h {
                    let sy = nearest_index(y, mh, h);
                    for x in 0..w {
                        out.push(src[(ch * mh + sy) * mw + nearest_index(x, mw, w)]);
                    }
                }
            }
            Some(Tensor::new(vec![mc, h, w], out)?)
        }
        None => None,
    };
    Ok(SampleRecord { image, mask, domain: record.domain, id: record.id.clone() })
}
