//! Adversarial alignment of amplitude spectra.
//!
//! A residual convolutional generator perturbs (log-normalised) source
//! amplitudes; a small convolutional discriminator tells target amplitudes
//! from generated ones. The discriminator minimises
//! `−[mean log D(A_t) + mean log(1 − D(G(A_s)))]`; the generator by default
//! minimises the non-saturating `−mean log D(G(A_s))`.

use rand::Rng as _;

use crate::error::{Error, Result};
use crate::nn::{Conv2d, Linear};
use crate::optim::{zero_grads, Adam};
use crate::rng::Rng;
use crate::tensor::Tensor;

/// Probabilities are clamped into `[PROB_EPS, 1 − PROB_EPS]` before any log.
pub const PROB_EPS: f64 = 1e-7;

/// Min and max of `log(1 + A)` over one sample, kept so a normalised
/// amplitude can be mapped back.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LogRange {
    pub lo: f64,
    pub hi: f64,
}

/// `log(1 + A)` min-max scaled to `[0, 1]`. A constant input maps to zeros.
pub fn log_normalize(amplitude: &[f64]) -> Result<Vec<f64>> {
    log_normalize_with_range(amplitude).map(|(v, _)| v)
}

pub fn log_normalize_with_range(amplitude: &[f64]) -> Result<(Vec<f64>, LogRange)> {
    if let Some(a) = amplitude.iter().find(|a| !(**a >= 0.0)) {
        return Err(Error::contract(format!("amplitude must be non-negative, saw {a}")));
    }
    let logs: Vec<f64> = amplitude.iter().map(|a| a.ln_1p()).collect();
    let lo = logs.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = hi - lo;
    let scale = if span > 0.0 { 1.0 / span } else { 0.0 };
    let out = logs.iter().map(|l| (l - lo) * scale).collect();
    Ok((out, LogRange { lo, hi }))
}

/// Inverse of [`log_normalize_with_range`] under a chosen range; negative
/// results are clipped to zero amplitude.
pub fn denormalize(normalized: &[f64], range: LogRange) -> Vec<f64> {
    let span = range.hi - range.lo;
    normalized
        .iter()
        .map(|v| (v * span + range.lo).exp_m1().max(0.0))
        .collect()
}

/// Residual amplitude generator: `x + conv(relu(conv(relu(conv(x)))))`.
#[derive(Debug, Clone)]
pub struct Generator {
    pub layers: [Conv2d; 3],
}

impl Generator {
    pub const HIDDEN: usize = 16;

    /// The last layer starts at zero, so a fresh generator is the identity.
    pub fn new(channels: usize, rng: &mut Rng) -> Self {
        let first = Conv2d::new(channels, Self::HIDDEN, 3, 1, rng);
        let hidden = Conv2d::new(Self::HIDDEN, Self::HIDDEN, 3, 1, rng);
        let last = Conv2d::new(Self::HIDDEN, channels, 3, 1, rng);
        last.weight.update(|w| w.fill(0.0));
        Generator { layers: [first, hidden, last] }
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let h = self.layers[0].forward(x)?.relu();
        let h = self.layers[1].forward(&h)?.relu();
        x.add(&self.layers[2].forward(&h)?)
    }

    pub fn parameters(&self) -> Vec<Tensor> {
        self.layers.iter().flat_map(Conv2d::parameters).collect()
    }

    pub(crate) fn named(&self, prefix: &str, out: &mut Vec<(String, Tensor)>) {
        for (i, l) in self.layers.iter().enumerate() {
            l.named(&format!("{prefix}.conv{i}"), out);
        }
    }
}

/// Two stride-2 convolutions, global average pooling and a linear logit.
#[derive(Debug, Clone)]
pub struct Discriminator {
    pub conv1: Conv2d,
    pub conv2: Conv2d,
    pub head: Linear,
}

impl Discriminator {
    pub fn new(channels: usize, rng: &mut Rng) -> Self {
        Discriminator {
            conv1: Conv2d::new(channels, 16, 3, 2, rng),
            conv2: Conv2d::new(16, 32, 3, 2, rng),
            head: Linear::new(32, 1, rng),
        }
    }

    /// Pre-sigmoid scores, `[B, 1]`.
    pub fn logits(&self, x: &Tensor) -> Result<Tensor> {
        let h = self.conv1.forward(x)?.relu();
        let h = self.conv2.forward(&h)?.relu();
        self.head.forward(&h.global_avg_pool()?)
    }

    /// `P(target)` per sample, `[B, 1]`.
    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        Ok(self.logits(x)?.sigmoid())
    }

    pub fn parameters(&self) -> Vec<Tensor> {
        let mut p = self.conv1.parameters();
        p.extend(self.conv2.parameters());
        p.extend(self.head.parameters());
        p
    }

    pub(crate) fn named(&self, prefix: &str, out: &mut Vec<(String, Tensor)>) {
        self.conv1.named(&format!("{prefix}.conv1"), out);
        self.conv2.named(&format!("{prefix}.conv2"), out);
        self.head.named(&format!("{prefix}.head"), out);
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum GeneratorObjective {
    /// `−mean log D(G(A_s))`
    #[default]
    NonSaturating,
    /// `mean log(1 − D(G(A_s)))`, the literal minimax form.
    Saturating,
}

fn finite(t: &Tensor, what: &str) -> Result<()> {
    let v = t.item();
    if v.is_finite() {
        Ok(())
    } else {
        Err(Error::numerical(format!("{what} is {v}")))
    }
}

/// Discriminator loss from probabilities on real (target) and fake samples.
pub fn discriminator_loss(p_real: &Tensor, p_fake: &Tensor) -> Result<Tensor> {
    let real = p_real.clamp(PROB_EPS, 1.0 - PROB_EPS).log().mean();
    let fake = p_fake.clamp(PROB_EPS, 1.0 - PROB_EPS).affine(-1.0, 1.0).log().mean();
    let loss = real.add(&fake)?.neg();
    finite(&loss, "discriminator loss")?;
    Ok(loss)
}

pub fn generator_loss(p_fake: &Tensor, objective: GeneratorObjective) -> Result<Tensor> {
    let p = p_fake.clamp(PROB_EPS, 1.0 - PROB_EPS);
    let loss = match objective {
        GeneratorObjective::NonSaturating => p.log().mean().neg(),
        GeneratorObjective::Saturating => p.affine(-1.0, 1.0).log().mean(),
    };
    finite(&loss, "generator loss")?;
    Ok(loss)
}

/// Both adversarial losses at the current parameters.
#[derive(Debug, Clone)]
pub struct AdversarialLosses {
    pub d_loss: Tensor,
    pub g_loss: Tensor,
    pub p_real: Vec<f64>,
    pub p_fake: Vec<f64>,
}

/// Losses for one batch. Inside `d_loss` the generated amplitudes are
/// detached, so it never sends gradient into the generator.
pub fn adl_losses(
    disc: &Discriminator,
    gen: &Generator,
    a_s: &Tensor,
    a_t: &Tensor,
    objective: GeneratorObjective,
) -> Result<AdversarialLosses> {
    if a_s.shape().first().copied().unwrap_or(0) == 0 || a_t.shape().first().copied().unwrap_or(0) == 0 {
        return Err(Error::usage("adversarial batches must be non-empty"));
    }
    let fake = gen.forward(a_s)?;
    let p_real = disc.forward(a_t)?;
    let p_fake_detached = disc.forward(&fake.detach())?;
    let d_loss = discriminator_loss(&p_real, &p_fake_detached)?;
    let p_fake = disc.forward(&fake)?;
    let g_loss = generator_loss(&p_fake, objective)?;
    Ok(AdversarialLosses {
        d_loss,
        g_loss,
        p_real: p_real.to_vec(),
        p_fake: p_fake.to_vec(),
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepReport {
    pub d_loss: f64,
    pub g_loss: f64,
    /// Share of correct real/fake calls at threshold 0.5.
    pub d_acc: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AdversarialConfig {
    pub lr: f64,
    pub objective: GeneratorObjective,
    /// Scale applied to the generator loss before its backward pass.
    pub generator_weight: f64,
}

impl Default for AdversarialConfig {
    fn default() -> Self {
        AdversarialConfig { lr: 2e-4, objective: GeneratorObjective::NonSaturating, generator_weight: 1.0 }
    }
}

/// Generator, discriminator and their optimizers.
#[derive(Debug)]
pub struct AdversarialTrainer {
    pub generator: Generator,
    pub discriminator: Discriminator,
    pub cfg: AdversarialConfig,
    opt_g: Adam,
    opt_d: Adam,
}

impl AdversarialTrainer {
    pub fn new(generator: Generator, discriminator: Discriminator, cfg: AdversarialConfig) -> Self {
        let opt_g = Adam::new(cfg.lr);
        let opt_d = Adam::new(cfg.lr);
        AdversarialTrainer { generator, discriminator, cfg, opt_g, opt_d }
    }

    /// One discriminator update, then (unless frozen) one generator update.
    pub fn step(&mut self, a_s: &Tensor, a_t: &Tensor, update_generator: bool) -> Result<StepReport> {
        if a_s.shape().first().copied().unwrap_or(0) == 0 || a_t.shape().first().copied().unwrap_or(0) == 0 {
            return Err(Error::usage("adversarial batches must be non-empty"));
        }
        let d_params = self.discriminator.parameters();
        let g_params = self.generator.parameters();

        let fake = self.generator.forward(a_s)?.detach();
        let p_real = self.discriminator.forward(a_t)?;
        let p_fake = self.discriminator.forward(&fake)?;
        let d_loss = discriminator_loss(&p_real, &p_fake)?;
        let correct = p_real.data().iter().filter(|&&p| p >= 0.5).count()
            + p_fake.data().iter().filter(|&&p| p < 0.5).count();
        let d_acc = correct as f64 / (p_real.numel() + p_fake.numel()) as f64;
        zero_grads(&d_params);
        d_loss.backward()?;
        self.opt_d.step(&d_params)?;

        let fake = self.generator.forward(a_s)?;
        let p_fake = self.discriminator.forward(&fake)?;
        let g_loss = generator_loss(&p_fake, self.cfg.objective)?;
        if update_generator {
            zero_grads(&g_params);
            g_loss.scale(self.cfg.generator_weight).backward()?;
            self.opt_g.step(&g_params)?;
        }
        // discriminator gradients picked up by the generator pass are stale
        zero_grads(&d_params);

        Ok(StepReport { d_loss: d_loss.item(), g_loss: g_loss.item(), d_acc })
    }

    /// Generated amplitudes for a batch, detached from the graph.
    pub fn generate(&self, a_s: &Tensor) -> Result<Tensor> {
        Ok(self.generator.forward(a_s)?.detach())
    }
}

/// Offset subtracted by [`toy_amplitudes`].
pub const TOY_OFFSET: f64 = 1.0;

/// Toy amplitude maps for exercising the adversarial game: `log(1 + s·u) - 1`
/// with `u ~ U(0, 1)` per bin, shape `[B, 1, size, size]`.
///
/// The offset centres the two scales used in practice (1 and 10) around zero;
/// uncentred inputs leave the discriminator stuck on a constant answer for a
/// few hundred steps on some seeds.
pub fn toy_amplitudes(rng: &mut Rng, batch: usize, size: usize, scale: f64) -> Tensor {
    let data = (0..batch * size * size).map(|_| (scale * rng.gen::<f64>()).ln_1p() - TOY_OFFSET).collect();
    Tensor::new(vec![batch, 1, size, size], data).expect("toy shape")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{substream, Stream};

    #[test]
    fn log_normalize_cases() {
        assert_eq!(log_normalize(&[0.0; 5]).unwrap(), vec![0.0; 5]);
        assert_eq!(log_normalize(&[0.0, 0.0, 3.0]).unwrap(), vec![0.0, 0.0, 1.0]);
        let e = std::f64::consts::E;
        let v = log_normalize(&[1.0, e - 1.0, e * e - 1.0]).unwrap();
        // log1p gives [ln 2, 1, 2]
        let l2 = 2f64.ln();
        let expect = [0.0, (1.0 - l2) / (2.0 - l2), 1.0];
        for (a, b) in v.iter().zip(expect) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!(matches!(log_normalize(&[1.0, -0.5]), Err(Error::Contract(_))));
    }

    #[test]
    fn denormalize_inverts() {
        let a = [0.0, 1.0, 10.0, 200.0];
        let (n, r) = log_normalize_with_range(&a).unwrap();
        for (x, y) in denormalize(&n, r).iter().zip(a) {
            assert!((x - y).abs() < 1e-9 * (1.0 + y));
        }
    }

    #[test]
    fn fixed_point_losses() {
        let half = Tensor::full(vec![4, 1], 0.5);
        let d = discriminator_loss(&half, &half).unwrap().item();
        assert!((d - 2.0 * 2f64.ln()).abs() < 1e-12);
        let g = generator_loss(&half, GeneratorObjective::NonSaturating).unwrap().item();
        assert!((g - 2f64.ln()).abs() < 1e-12);
        let real = Tensor::full(vec![4, 1], 1.0 - 1e-7);
        let fake = Tensor::full(vec![4, 1], 1e-7);
        assert!(discriminator_loss(&real, &fake).unwrap().item() < 1e-6);
    }

    #[test]
    fn clamped_losses_stay_finite() {
        let one = Tensor::full(vec![2, 1], 1.0);
        let zero = Tensor::full(vec![2, 1], 0.0);
        assert!(discriminator_loss(&zero, &one).unwrap().item().is_finite());
        assert!(generator_loss(&zero, GeneratorObjective::NonSaturating).unwrap().item().is_finite());
        assert!(generator_loss(&one, GeneratorObjective::Saturating).unwrap().item().is_finite());
    }

    #[test]
    fn nan_loss_is_numerical_error() {
        let nan = Tensor::full(vec![1, 1], f64::NAN);
        assert!(matches!(generator_loss(&nan, GeneratorObjective::NonSaturating), Err(Error::Numerical(_))));
    }

    #[test]
    fn shapes_through_the_pair() {
        let mut rng = substream(1, Stream::Init);
        let g = Generator::new(3, &mut rng);
        let d = Discriminator::new(3, &mut rng);
        let x = Tensor::zeros(vec![2, 3, 8, 8]);
        assert_eq!(g.forward(&x).unwrap().shape(), &[2, 3, 8, 8]);
        let p = d.forward(&x).unwrap();
        assert_eq!(p.shape(), &[2, 1]);
        assert!(p.data().iter().all(|&v| v > 0.0 && v < 1.0));
    }

    #[test]
    fn updates_touch_only_their_own_side() {
        use crate::nn::checksum;
        let build = || {
            let mut rng = substream(3, Stream::Init);
            let g = Generator::new(1, &mut rng);
            let d = Discriminator::new(1, &mut rng);
            AdversarialTrainer::new(g, d, AdversarialConfig::default())
        };
        let mut data = substream(3, Stream::Adversarial);
        let a_s = toy_amplitudes(&mut data, 4, 8, 1.0);
        let a_t = toy_amplitudes(&mut data, 4, 8, 10.0);

        let mut frozen = build();
        let g0 = checksum(&frozen.generator.parameters());
        let d0 = checksum(&frozen.discriminator.parameters());
        frozen.step(&a_s, &a_t, false).unwrap();
        assert_eq!(checksum(&frozen.generator.parameters()), g0);
        assert_ne!(checksum(&frozen.discriminator.parameters()), d0);

        // the generator half of a full step leaves the discriminator exactly
        // where the discriminator half put it
        let mut full = build();
        full.step(&a_s, &a_t, true).unwrap();
        assert_eq!(
            checksum(&full.discriminator.parameters()),
            checksum(&frozen.discriminator.parameters())
        );
        assert_ne!(checksum(&full.generator.parameters()), g0);
    }
}
