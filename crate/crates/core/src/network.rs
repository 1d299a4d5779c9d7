//! Spatial-frequency segmentation network.
//!
//! Two identical four-stage convolutional encoders, one over the image and
//! one over its centered spectrum (`[log-normalised amplitude ‖ phase/π]`),
//! are joined stage by stage: frequency features are bilinearly resampled to
//! the spatial resolution and concatenated on the channel axis. A decoder
//! with skip connections brings the stage-4 features back to full
//! resolution, where a logit head and a sigmoid attention head meet:
//! `logits = pre_logits ⊙ attention`.
//!
//! With `use_sfi` off the frequency encoder and the attention gate are not
//! used and the network is a plain spatial encoder-decoder.

use crate::adversarial::log_normalize;
use crate::error::{Error, Result};
use crate::nn::Conv2d;
use crate::rng::{labelled, Rng, Stream};
use crate::spectral::decompose;
use crate::tensor::Tensor;

/// Output channels of the four encoder stages.
pub const STAGE_CHANNELS: [usize; 4] = [16, 32, 64, 128];
/// Output channels of the decoder blocks, deepest first.
pub const DECODER_CHANNELS: [usize; 4] = [32, 32, 16, 8];

/// Initial bias of the attention head. The gate starts open (σ(4) ≈ 0.98);
/// a half-open gate lets training park foreground logits just below zero by
/// closing it instead of fixing their sign.
pub const ATTENTION_BIAS: f64 = 4.0;
/// Initial bias of the logit head, `ln(0.12 / 0.88)`: a foreground prior
/// close to the share of foreground pixels in typical masks.
pub const HEAD_BIAS: f64 = -2.0;

/// Which of the three alignment modules are active.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub struct AblationFlags {
    pub use_stff: bool,
    pub use_adl: bool,
    pub use_sfi: bool,
}

impl AblationFlags {
    pub const BASELINE: AblationFlags = AblationFlags { use_stff: false, use_adl: false, use_sfi: false };
    pub const FULL: AblationFlags = AblationFlags { use_stff: true, use_adl: true, use_sfi: true };

    /// The seven configurations of the module ablation, baseline first and
    /// full model last.
    pub fn ablation_grid() -> [(&'static str, AblationFlags); 7] {
        let f = |use_stff, use_adl, use_sfi| AblationFlags { use_stff, use_adl, use_sfi };
        [
            ("baseline", f(false, false, false)),
            ("+STFF", f(true, false, false)),
            ("+ADL", f(false, true, false)),
            ("+SFI", f(false, false, true)),
            ("+STFF+ADL", f(true, true, false)),
            ("+STFF+SFI", f(true, false, true)),
            ("full", f(true, true, true)),
        ]
    }

    /// Comma-separated module names, `none` when all are off.
    pub fn label(&self) -> String {
        let mut parts = Vec::new();
        if self.use_stff {
            parts.push("stff");
        }
        if self.use_adl {
            parts.push("adl");
        }
        if self.use_sfi {
            parts.push("sfi");
        }
        if parts.is_empty() {
            "none".into()
        } else {
            parts.join(",")
        }
    }

    /// Parse the output of [`AblationFlags::label`] (also accepts `all`).
    pub fn parse(s: &str) -> Result<AblationFlags> {
        let mut flags = AblationFlags::default();
        let s = s.trim();
        if s.eq_ignore_ascii_case("none") || s.is_empty() {
            return Ok(flags);
        }
        if s.eq_ignore_ascii_case("all") || s.eq_ignore_ascii_case("full") {
            return Ok(AblationFlags::FULL);
        }
        for part in s.split(',') {
            match part.trim().to_ascii_lowercase().as_str() {
                "stff" => flags.use_stff = true,
                "adl" => flags.use_adl = true,
                "sfi" => flags.use_sfi = true,
                other => return Err(Error::config(format!("unknown module '{other}' in flags '{s}'"))),
            }
        }
        Ok(flags)
    }
}

/// Four stride-2 `3×3` convolutions with ReLU.
#[derive(Debug, Clone)]
pub struct Encoder {
    pub stages: [Conv2d; 4],
}

impl Encoder {
    pub fn new(in_channels: usize, rng: &mut Rng) -> Self {
        let [c1, c2, c3, c4] = STAGE_CHANNELS;
        Encoder {
            stages: [
                Conv2d::new(in_channels, c1, 3, 2, rng),
                Conv2d::new(c1, c2, 3, 2, rng),
                Conv2d::new(c2, c3, 3, 2, rng),
                Conv2d::new(c3, c4, 3, 2, rng),
            ],
        }
    }

    /// Per-stage features; stage k is `[B, ch_k, H/2^k, W/2^k]`.
    pub fn forward(&self, x: &Tensor) -> Result<Vec<Tensor>> {
        let &[b, _, h, w] = x.shape() else {
            return Err(Error::shape(format!("encoder input must be [B, C, H, W], got {:?}", x.shape())));
        };
        let mut feats = Vec::with_capacity(4);
        let mut cur = x.clone();
        for (k, stage) in self.stages.iter().enumerate() {
            cur = stage.forward(&cur)?.relu();
            let scale = 1 << (k + 1);
            let expect = [b, STAGE_CHANNELS[k], h / scale, w / scale];
            assert_eq!(cur.shape(), expect, "encoder stage {} shape contract", k + 1);
            feats.push(cur.clone());
        }
        Ok(feats)
    }

    pub fn parameters(&self) -> Vec<Tensor> {
        self.stages.iter().flat_map(Conv2d::parameters).collect()
    }

    pub(crate) fn named(&self, prefix: &str, out: &mut Vec<(String, Tensor)>) {
        for (i, s) in self.stages.iter().enumerate() {
            s.named(&format!("{prefix}.stage{}", i + 1), out);
        }
    }
}

/// Resample each frequency stage to its spatial partner and concatenate.
pub fn sfi_fuse(spatial: &[Tensor], frequency: &[Tensor]) -> Result<Vec<Tensor>> {
    if spatial.len() != frequency.len() {
        return Err(Error::usage(format!(
            "spatial branch has {} stages, frequency branch {}",
            spatial.len(),
            frequency.len()
        )));
    }
    spatial
        .iter()
        .zip(frequency)
        .map(|(s, f)| {
            if s.shape()[0] != f.shape()[0] {
                return Err(Error::shape(format!("batch sizes differ: {:?} vs {:?}", s.shape(), f.shape())));
            }
            let f = f.bilinear_resample(s.shape()[2], s.shape()[3])?;
            Tensor::concat_channels(&[s, &f])
        })
        .collect()
}

/// Upsampling decoder with skip connections.
#[derive(Debug, Clone)]
pub struct Decoder {
    /// `1×1` projection of the deepest features.
    pub lateral: Conv2d,
    /// `3×3` convolutions at `H/8`, `H/4`, `H/2`.
    pub blocks: [Conv2d; 3],
}

impl Decoder {
    /// `widen` is 2 when the skips carry concatenated spatial and frequency
    /// features, 1 for the spatial branch alone.
    pub fn new(widen: usize, rng: &mut Rng) -> Self {
        let [s1, s2, s3, s4] = STAGE_CHANNELS.map(|c| c * widen);
        let [d4, d3, d2, d1] = DECODER_CHANNELS;
        Decoder {
            lateral: Conv2d::new(s4, d4, 1, 1, rng),
            blocks: [
                Conv2d::new(d4 + s3, d3, 3, 1, rng),
                Conv2d::new(d3 + s2, d2, 3, 1, rng),
                Conv2d::new(d2 + s1, d1, 3, 1, rng),
            ],
        }
    }

    /// Features at full resolution, `[B, 8, H, W]`, without a final ReLU.
    pub fn forward(&self, skips: &[Tensor], out_h: usize, out_w: usize) -> Result<Tensor> {
        let mut x = self.lateral.forward(&skips[3])?.relu();
        for (i, (block, skip)) in self.blocks.iter().zip(skips[..3].iter().rev()).enumerate() {
            let up = x.bilinear_resample(skip.shape()[2], skip.shape()[3])?;
            x = block.forward(&Tensor::concat_channels(&[&up, skip])?)?;
            // the last block feeds two linear 1×1 heads; a ReLU there can
            // switch off all eight channels for good early in training
            if i + 1 < self.blocks.len() {
                x = x.relu();
            }
        }
        x.bilinear_resample(out_h, out_w)
    }

    pub fn parameters(&self) -> Vec<Tensor> {
        let mut p = self.lateral.parameters();
        p.extend(self.blocks.iter().flat_map(Conv2d::parameters));
        p
    }

    pub(crate) fn named(&self, prefix: &str, out: &mut Vec<(String, Tensor)>) {
        self.lateral.named(&format!("{prefix}.lateral"), out);
        for (i, b) in self.blocks.iter().enumerate() {
            b.named(&format!("{prefix}.block{}", i + 1), out);
        }
    }
}

/// Segmentation weights: both encoders, decoder, logit and attention heads.
#[derive(Debug, Clone)]
pub struct SegmentationNet {
    pub channels: usize,
    pub use_sfi: bool,
    pub spatial: Encoder,
    pub frequency: Encoder,
    pub decoder: Decoder,
    pub head: Conv2d,
    pub attention: Conv2d,
}

/// Output of a forward pass. Both maps are `[B, 1, H, W]`.
#[derive(Debug, Clone)]
pub struct SegOutput {
    pub logits: Tensor,
    pub attention: Tensor,
    /// Head output before gating.
    pub pre_logits: Tensor,
}

impl SegmentationNet {
    /// Each parameter group draws from its own labelled stream, so the
    /// spatial path starts from the same weights whatever the flags.
    pub fn new(channels: usize, use_sfi: bool, seed: u64) -> Self {
        let r = |label: &str| labelled(seed, Stream::Init, label);
        let widen = if use_sfi { 2 } else { 1 };
        let d1 = DECODER_CHANNELS[3];
        let attention = Conv2d::new(d1, 1, 1, 1, &mut r("attention"));
        attention.bias.update(|b| b.fill(ATTENTION_BIAS));
        let head = Conv2d::new(d1, 1, 1, 1, &mut r("head"));
        head.bias.update(|b| b.fill(HEAD_BIAS));
        SegmentationNet {
            channels,
            use_sfi,
            spatial: Encoder::new(channels, &mut r("spatial")),
            frequency: Encoder::new(2 * channels, &mut r("frequency")),
            decoder: Decoder::new(widen, &mut r(if use_sfi { "decoder-sfi" } else { "decoder" })),
            head,
            attention,
        }
    }

    pub fn forward(&self, images: &Tensor) -> Result<SegOutput> {
        let &[b, c, h, w] = images.shape() else {
            return Err(Error::shape(format!("network input must be [B, C, H, W], got {:?}", images.shape())));
        };
        if c != self.channels {
            return Err(Error::shape(format!("network built for {} channels, input has {c}", self.channels)));
        }
        if h == 0 || w == 0 || h % 16 != 0 || w % 16 != 0 {
            return Err(Error::shape(format!("spatial size {h}x{w} is not divisible by 16")));
        }
        let spatial = self.spatial.forward(images)?;
        let skips = if self.use_sfi {
            let freq = self.frequency.forward(&frequency_input(images)?)?;
            let cat = sfi_fuse(&spatial, &freq)?;
            for (k, t) in cat.iter().enumerate() {
                let scale = 1 << (k + 1);
                assert_eq!(t.shape(), [b, 2 * STAGE_CHANNELS[k], h / scale, w / scale], "concat stage {}", k + 1);
            }
            cat
        } else {
            spatial
        };
        let feat = self.decoder.forward(&skips, h, w)?;
        let pre_logits = self.head.forward(&feat)?;
        let (logits, attention) = if self.use_sfi {
            let att = self.attention.forward(&feat)?.sigmoid();
            (pre_logits.mul(&att)?, att)
        } else {
            (pre_logits.clone(), Tensor::full(vec![b, 1, h, w], 1.0))
        };
        debug_assert_eq!(logits.shape(), [b, 1, h, w]);
        Ok(SegOutput { logits, attention, pre_logits })
    }

    /// Foreground probabilities, detached.
    pub fn predict(&self, images: &Tensor) -> Result<Tensor> {
        Ok(self.forward(images)?.logits.sigmoid().detach())
    }

    /// Parameters that take part in the forward pass under the current
    /// configuration.
    pub fn parameters(&self) -> Vec<Tensor> {
        let mut p = self.spatial.parameters();
        if self.use_sfi {
            p.extend(self.frequency.parameters());
        }
        p.extend(self.decoder.parameters());
        p.extend(self.head.parameters());
        if self.use_sfi {
            p.extend(self.attention.parameters());
        }
        p
    }

    /// Every parameter including unused branches, with stable names.
    pub fn named_parameters(&self) -> Vec<(String, Tensor)> {
        let mut out = Vec::new();
        self.spatial.named("spatial", &mut out);
        self.frequency.named("frequency", &mut out);
        self.decoder.named("decoder", &mut out);
        self.head.named("head", &mut out);
        self.attention.named("attention", &mut out);
        out
    }
}

/// `[B, 2C, H, W]` frequency-branch input: per sample, the centered
/// log-normalised amplitude of every channel followed by phase / π.
pub fn frequency_input(images: &Tensor) -> Result<Tensor> {
    let &[b, c, h, w] = images.shape() else {
        return Err(Error::shape(format!("expected [B, C, H, W], got {:?}", images.shape())));
    };
    let per = c * h * w;
    let data = images.data();
    let mut out = Vec::with_capacity(2 * b * per);
    for i in 0..b {
        let img = Tensor::new(vec![c, h, w], data[i * per..(i + 1) * per].to_vec())?;
        let spec = decompose(&img)?.center_shift()?;
        out.extend(log_normalize(&spec.amplitude)?);
        out.extend(spec.phase.iter().map(|p| p / std::f64::consts::PI));
    }
    Tensor::new(vec![b, 2 * c, h, w], out)
}

/// Binary cross-entropy on `σ(logits)` plus per-sample soft Dice
/// (smoothing 1), equally weighted. Probabilities are clamped as in the
/// adversarial losses.
pub fn seg_loss(logits: &Tensor, mask: &Tensor) -> Result<Tensor> {
    if logits.shape() != mask.shape() {
        return Err(Error::shape(format!("logits {:?} vs mask {:?}", logits.shape(), mask.shape())));
    }
    if let Some(v) = mask.data().iter().find(|&&v| v != 0.0 && v != 1.0) {
        return Err(Error::contract(format!("segmentation mask must be binary, saw {v}")));
    }
    let eps = crate::adversarial::PROB_EPS;
    seg_loss_from_probs(&logits.sigmoid().clamp(eps, 1.0 - eps), mask)
}

/// [`seg_loss`] on probabilities that are already clamped.
pub fn seg_loss_from_probs(p: &Tensor, mask: &Tensor) -> Result<Tensor> {
    let inv_mask = mask.affine(-1.0, 1.0);
    let bce = mask
        .mul(&p.log())?
        .add(&inv_mask.mul(&p.affine(-1.0, 1.0).log())?)?
        .mean()
        .neg();
    let inter = p.mul(mask)?.sum_per_sample()?;
    let total = p.sum_per_sample()?.add(&mask.sum_per_sample()?)?;
    let dice = inter.affine(2.0, 1.0).mul(&reciprocal(&total.affine(1.0, 1.0)))?.mean().affine(-1.0, 1.0);
    let loss = bce.add(&dice)?;
    let v = loss.item();
    if !v.is_finite() {
        return Err(Error::numerical(format!("segmentation loss is {v}")));
    }
    Ok(loss)
}

fn reciprocal(x: &Tensor) -> Tensor {
    x.log().neg().exp()
}
