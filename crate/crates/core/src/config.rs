//! Run configuration as flat `key = value` text.
//!
//! Blank lines and `#` comments are ignored. Every key has a default, so an
//! empty file is a valid configuration. [`RunConfig::to_text`] writes every
//! key, and parsing that text gives back the same configuration.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::adversarial::GeneratorObjective;
use crate::data::{ShapeFamily, SynthConfig};
use crate::error::{Error, Result};
use crate::fusion::{AlphaMode, FusionConfig, HighFrequencySource};
use crate::network::AblationFlags;

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub flags: AblationFlags,
    /// Labelled source data on disk; synthetic data is used when unset.
    pub source_dir: Option<PathBuf>,
    /// Unlabelled target images.
    pub target_dir: Option<PathBuf>,
    /// Labelled target images for validation.
    pub val_dir: Option<PathBuf>,
    /// Side length everything on disk is resampled to.
    pub image_size: usize,
    pub synth: SynthConfig,
    pub lr: f64,
    /// Cosine decay of `lr` to zero over the run, or a constant rate.
    pub cosine_lr: bool,
    pub adl_lr: f64,
    /// Weight of the generator loss.
    pub lambda: f64,
    pub beta: f64,
    pub alpha: AlphaMode,
    pub high_freq: HighFrequencySource,
    pub objective: GeneratorObjective,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub out_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            flags: AblationFlags::FULL,
            source_dir: None,
            target_dir: None,
            val_dir: None,
            image_size: 64,
            synth: SynthConfig::default(),
            lr: 2e-3,
            cosine_lr: true,
            adl_lr: 2e-4,
            lambda: 0.1,
            beta: 0.1,
            alpha: AlphaMode::Uniform,
            high_freq: HighFrequencySource::Source,
            objective: GeneratorObjective::NonSaturating,
            epochs: 20,
            batch_size: 8,
            seed: 0,
            out_dir: PathBuf::from("runs/default"),
        }
    }
}

fn parse_num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse().map_err(|_| Error::config(format!("invalid value '{v}' for key '{key}'")))
}

fn parse_bool(key: &str, v: &str) -> Result<bool> {
    match v.to_ascii_lowercase().as_str() {
        "true" | "1" | "yes" | "on" => Ok(true),
        "false" | "0" | "no" | "off" => Ok(false),
        _ => Err(Error::config(format!("invalid boolean '{v}' for key '{key}'"))),
    }
}

fn opt_path(v: &str) -> Option<PathBuf> {
    if v.is_empty() {
        None
    } else {
        Some(PathBuf::from(v))
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<RunConfig> {
        let mut cfg = RunConfig::default();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::config(format!("line {}: expected 'key = value', got '{line}'", n + 1)))?;
            cfg.set(key.trim(), value.trim())?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Load {
            path: path.to_path_buf(),
            reason: e.to_string(),
        })?;
        RunConfig::parse(&text)
    }

    /// Apply one `key = value` assignment.
    pub fn set(&mut self, key: &str, v: &str) -> Result<()> {
        let s = &mut self.synth;
        match key {
            "flags" => self.flags = AblationFlags::parse(v)?,
            "use_stff" => self.flags.use_stff = parse_bool(key, v)?,
            "use_adl" => self.flags.use_adl = parse_bool(key, v)?,
            "use_sfi" => self.flags.use_sfi = parse_bool(key, v)?,
            "source_dir" => self.source_dir = opt_path(v),
            "target_dir" => self.target_dir = opt_path(v),
            "val_dir" => self.val_dir = opt_path(v),
            "image_size" => self.image_size = parse_num(key, v)?,
            "synth_size" => s.size = parse_num(key, v)?,
            "synth_channels" => s.channels = parse_num(key, v)?,
            "synth_shape" => {
                s.shape = match v {
                    "ellipse" => ShapeFamily::Ellipse,
                    "vessel" => ShapeFamily::Vessel,
                    _ => return Err(Error::config(format!("invalid value '{v}' for key 'synth_shape'"))),
                }
            }
            "synth_n_source" => s.n_source = parse_num(key, v)?,
            "synth_n_target" => s.n_target = parse_num(key, v)?,
            "synth_n_val" => s.n_val = parse_num(key, v)?,
            "source_foreground" => s.source.foreground = parse_num(key, v)?,
            "source_background" => s.source.background = parse_num(key, v)?,
            "source_noise" => s.source.noise = parse_num(key, v)?,
            "target_gain" => s.target.gain = parse_num(key, v)?,
            "target_bias" => s.target.bias = parse_num(key, v)?,
            "target_illumination" => s.target.illumination = parse_num(key, v)?,
            "target_noise" => s.target.noise = parse_num(key, v)?,
            "lr" => self.lr = parse_num(key, v)?,
            "lr_schedule" => {
                self.cosine_lr = match v {
                    "cosine" => true,
                    "constant" => false,
                    _ => return Err(Error::config(format!("invalid value '{v}' for key 'lr_schedule'"))),
                }
            }
            "adl_lr" => self.adl_lr = parse_num(key, v)?,
            "lambda" => self.lambda = parse_num(key, v)?,
            "beta" => self.beta = parse_num(key, v)?,
            "alpha" => {
                self.alpha = if v == "uniform" { AlphaMode::Uniform } else { AlphaMode::Fixed(parse_num(key, v)?) }
            }
            "high_freq" => {
                self.high_freq = match v {
                    "source" => HighFrequencySource::Source,
                    "target" => HighFrequencySource::Target,
                    _ => return Err(Error::config(format!("invalid value '{v}' for key 'high_freq'"))),
                }
            }
            "generator_objective" => {
                self.objective = match v {
                    "non_saturating" => GeneratorObjective::NonSaturating,
                    "saturating" => GeneratorObjective::Saturating,
                    _ => return Err(Error::config(format!("invalid value '{v}' for key 'generator_objective'"))),
                }
            }
            "epochs" => self.epochs = parse_num(key, v)?,
            "batch_size" => self.batch_size = parse_num(key, v)?,
            "seed" => self.seed = parse_num(key, v)?,
            "out_dir" => self.out_dir = PathBuf::from(v),
            _ => return Err(Error::config(format!("unknown config key '{key}'"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.synth_config().validate()?;
        self.fusion_config().validate()?;
        if self.image_size == 0 || self.image_size % 16 != 0 {
            return Err(Error::config(format!("image_size must be a positive multiple of 16, got {}", self.image_size)));
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::config("epochs and batch_size must be at least 1"));
        }
        if !(self.lr > 0.0) || !(self.adl_lr > 0.0) || !(self.lambda >= 0.0) {
            return Err(Error::config("learning rates must be positive and lambda non-negative"));
        }
        if self.source_dir.is_some() != self.val_dir.is_some() || self.source_dir.is_some() != self.target_dir.is_some() {
            return Err(Error::config("source_dir, target_dir and val_dir must be given together"));
        }
        Ok(())
    }

    /// The synthetic task, seeded by the run seed.
    pub fn synth_config(&self) -> SynthConfig {
        SynthConfig { seed: self.seed, ..self.synth.clone() }
    }

    pub fn fusion_config(&self) -> FusionConfig {
        FusionConfig {
            beta: self.beta,
            alpha: self.alpha,
            high_freq: self.high_freq,
            clamp_output: true,
            seed: self.seed,
        }
    }

    /// Every key in a fixed order.
    pub fn to_text(&self) -> String {
        let s = &self.synth;
        let path = |p: &Option<PathBuf>| p.as_ref().map(|p| p.display().to_string()).unwrap_or_default();
        let mut out = String::new();
        let mut kv = |k: &str, v: String| writeln!(out, "{k} = {v}").expect("string write");
        kv("flags", self.flags.label());
        kv("source_dir", path(&self.source_dir));
        kv("target_dir", path(&self.target_dir));
        kv("val_dir", path(&self.val_dir));
        kv("image_size", self.image_size.to_string());
        kv("synth_size", s.size.to_string());
        kv("synth_channels", s.channels.to_string());
        kv(
            "synth_shape",
            match s.shape {
                ShapeFamily::Ellipse => "ellipse",
                ShapeFamily::Vessel => "vessel",
            }
            .into(),
        );
        kv("synth_n_source", s.n_source.to_string());
        kv("synth_n_target", s.n_target.to_string());
        kv("synth_n_val", s.n_val.to_string());
        kv("source_foreground", s.source.foreground.to_string());
        kv("source_background", s.source.background.to_string());
        kv("source_noise", s.source.noise.to_string());
        kv("target_gain", s.target.gain.to_string());
        kv("target_bias", s.target.bias.to_string());
        kv("target_illumination", s.target.illumination.to_string());
        kv("target_noise", s.target.noise.to_string());
        kv("lr", self.lr.to_string());
        kv("lr_schedule", if self.cosine_lr { "cosine" } else { "constant" }.into());
        kv("adl_lr", self.adl_lr.to_string());
        kv("lambda", self.lambda.to_string());
        kv("beta", self.beta.to_string());
        kv(
            "alpha",
            match self.alpha {
                AlphaMode::Uniform => "uniform".into(),
                AlphaMode::Fixed(a) => a.to_string(),
            },
        );
        kv(
            "high_freq",
            match self.high_freq {
                HighFrequencySource::Source => "source",
                HighFrequencySource::Target => "target",
            }
            .into(),
        );
        kv(
            "generator_objective",
            match self.objective {
                GeneratorObjective::NonSaturating => "non_saturating",
                GeneratorObjective::Saturating => "saturating",
            }
            .into(),
        );
        kv("epochs", self.epochs.to_string());
        kv("batch_size", self.batch_size.to_string());
        kv("seed", self.seed.to_string());
        kv("out_dir", self.out_dir.display().to_string());
        out
    }
}
