//! Training, evaluation and the module ablation.
//!
//! One step over a batch of labelled source samples, each paired with a
//! randomly drawn unlabelled target sample:
//!
//! 1. with ADL, one discriminator and one generator update on the
//!    log-normalised centered amplitudes, after which the generated amplitude
//!    (mapped back through the paired target's log range) replaces the
//!    source amplitude;
//! 2. with STFF, the source (or generated) spectrum is fused with the target
//!    spectrum and recomposed; with ADL alone the generated amplitude is
//!    recomposed with the source phase;
//! 3. a segmentation update on the resulting images and the source masks.

use std::fs::File;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::Rng as _;

use crate::adversarial::{
    denormalize, log_normalize_with_range, AdversarialConfig, AdversarialTrainer, Discriminator, Generator, LogRange,
    StepReport,
};
use crate::checkpoint;
use crate::config::RunConfig;
use crate::data::{resample_to, synth_dataset, Domain, SampleRecord};
use crate::error::{Error, Result};
use crate::fusion::{fuse_spectra, FrequencyFusion};
use crate::io::load_dir;
use crate::metrics::{binarize, iou_dice, SegMetrics};
use crate::network::{seg_loss, AblationFlags, SegmentationNet};
use crate::optim::{zero_grads, Adam};
use crate::rng::{labelled, substream, Rng, Stream};
use crate::spectral::{decompose, recompose, Spectrum};
use crate::tensor::Tensor;

pub const CSV_HEADER: &str = "epoch,seg_loss,d_loss,g_loss,val_iou,val_dice";

/// Source, target and target-validation samples of one size.
#[derive(Clone, Debug)]
pub struct TrainData {
    pub source: Vec<SampleRecord>,
    pub target: Vec<SampleRecord>,
    pub val: Vec<SampleRecord>,
}

impl TrainData {
    /// Directories named by the config, or the synthetic task.
    pub fn from_config(cfg: &RunConfig) -> Result<TrainData> {
        let data = match (&cfg.source_dir, &cfg.target_dir, &cfg.val_dir) {
            (Some(s), Some(t), Some(v)) => {
                let size = (cfg.image_size, cfg.image_size);
                let fit = |recs: Vec<SampleRecord>| recs.iter().map(|r| resample_to(r, size)).collect::<Result<Vec<_>>>();
                TrainData {
                    source: fit(load_dir(s, true, Domain::Source)?)?,
                    target: fit(load_dir(t, false, Domain::Target)?)?,
                    val: fit(load_dir(v, true, Domain::Target)?)?,
                }
            }
            _ => {
                let d = synth_dataset(&cfg.synth_config())?;
                TrainData { source: d.source, target: d.target, val: d.target_val }
            }
        };
        data.check()?;
        Ok(data)
    }

    fn check(&self) -> Result<()> {
        if self.source.is_empty() || self.target.is_empty() || self.val.is_empty() {
            return Err(Error::usage("source, target and validation splits must all be non-empty"));
        }
        let dims = self.source[0].dims();
        for r in self.source.iter().chain(&self.target).chain(&self.val) {
            if r.dims() != dims {
                return Err(Error::usage(format!("sample {} is {:?}, expected {:?}", r.id, r.dims(), dims)));
            }
        }
        if self.source.iter().chain(&self.val).any(|r| r.mask.is_none()) {
            return Err(Error::usage("source and validation samples need masks"));
        }
        Ok(())
    }

    pub fn channels(&self) -> usize {
        self.source[0].dims().0
    }
}

/// Per-epoch summary; the adversarial columns are `None` without ADL.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpochReport {
    pub epoch: usize,
    pub seg_loss: f64,
    pub d_loss: Option<f64>,
    pub g_loss: Option<f64>,
    pub val: SegMetrics,
}

impl EpochReport {
    pub fn csv_row(&self) -> String {
        let opt = |v: Option<f64>| v.map(|v| format!("{v:.6}")).unwrap_or_default();
        format!(
            "{},{:.6},{},{},{:.6},{:.6}",
            self.epoch,
            self.seg_loss,
            opt(self.d_loss),
            opt(self.g_loss),
            self.val.iou,
            self.val.dice
        )
    }
}

/// Model, adversarial pair, optimizers and random streams of one run.
pub struct Trainer {
    pub cfg: RunConfig,
    pub net: SegmentationNet,
    pub adversarial: AdversarialTrainer,
    opt: Adam,
    fusion: FrequencyFusion,
    shuffle: Rng,
    epoch: usize,
}

fn stack(images: &[&Tensor]) -> Result<Tensor> {
    let shape = images[0].shape().to_vec();
    let mut data = Vec::with_capacity(images.len() * images[0].numel());
    for t in images {
        data.extend_from_slice(&t.data());
    }
    let mut full = vec![images.len()];
    full.extend(shape);
    Tensor::new(full, data)
}

impl Trainer {
    pub fn new(cfg: RunConfig, channels: usize) -> Result<Trainer> {
        cfg.validate()?;
        let seed = cfg.seed;
        let net = SegmentationNet::new(channels, cfg.flags.use_sfi, seed);
        let generator = Generator::new(channels, &mut labelled(seed, Stream::Init, "generator"));
        let discriminator = Discriminator::new(channels, &mut labelled(seed, Stream::Init, "discriminator"));
        let adversarial = AdversarialTrainer::new(
            generator,
            discriminator,
            AdversarialConfig { lr: cfg.adl_lr, objective: cfg.objective, generator_weight: cfg.lambda },
        );
        Ok(Trainer {
            opt: Adam::new(cfg.lr),
            fusion: FrequencyFusion::new(cfg.fusion_config())?,
            shuffle: substream(seed, Stream::Shuffle),
            net,
            adversarial,
            cfg,
            epoch: 0,
        })
    }

    pub fn flags(&self) -> AblationFlags {
        self.cfg.flags
    }

    pub fn epochs_done(&self) -> usize {
        self.epoch
    }

    /// All weights with stable names, unused branches included.
    pub fn named_parameters(&self) -> Vec<(String, Tensor)> {
        let mut p = self.net.named_parameters();
        self.adversarial.generator.named("generator", &mut p);
        self.adversarial.discriminator.named("discriminator", &mut p);
        p
    }

    /// Images the segmentation network trains on for one batch, plus the
    /// adversarial step report when ADL is on.
    fn prepare(&mut self, sources: &[&SampleRecord], targets: &[&SampleRecord]) -> Result<(Tensor, Option<StepReport>)> {
        let flags = self.cfg.flags;
        if !flags.use_adl && !flags.use_stff {
            return Ok((stack(&sources.iter().map(|r| &r.image).collect::<Vec<_>>())?, None));
        }
        let spec = |r: &SampleRecord| decompose(&r.image).and_then(|s| s.center_shift());
        let mut src: Vec<Spectrum> = sources.iter().map(|r| spec(r)).collect::<Result<_>>()?;
        let tgt: Vec<Spectrum> = targets.iter().map(|r| spec(r)).collect::<Result<_>>()?;

        let mut report = None;
        if flags.use_adl {
            let shape = {
                let (c, h, w) = sources[0].dims();
                vec![sources.len(), c, h, w]
            };
            let mut a_s = Vec::new();
            let mut a_t = Vec::new();
            let mut ranges: Vec<LogRange> = Vec::new();
            for (s, t) in src.iter().zip(&tgt) {
                a_s.extend(log_normalize_with_range(&s.amplitude)?.0);
                let (n, range) = log_normalize_with_range(&t.amplitude)?;
                a_t.extend(n);
                ranges.push(range);
            }
            let a_s = Tensor::new(shape.clone(), a_s)?;
            let a_t = Tensor::new(shape, a_t)?;
            report = Some(self.adversarial.step(&a_s, &a_t, true)?);
            let generated = self.adversarial.generate(&a_s)?;
            let g = generated.data();
            let per = src[0].amplitude.len();
            for (i, s) in src.iter_mut().enumerate() {
                s.amplitude = denormalize(&g[i * per..(i + 1) * per], ranges[i]);
                s.symmetrize_amplitude();
            }
        }

        let mut images = Vec::with_capacity(src.len());
        for (s, t) in src.iter().zip(&tgt) {
            let img = if flags.use_stff {
                let alpha = self.fusion.next_alpha();
                fuse_spectra(s, t, alpha, &self.fusion.cfg)?.fused_image
            } else {
                let raw = recompose(s)?;
                let clamped = raw.data().iter().map(|v| v.clamp(0.0, 1.0)).collect();
                Tensor::new(raw.shape().to_vec(), clamped)?
            };
            images.push(img);
        }
        Ok((stack(&images.iter().collect::<Vec<_>>())?, report))
    }

    /// Segmentation learning rate for a zero-based epoch.
    pub fn lr_at(&self, epoch: usize) -> f64 {
        if !self.cfg.cosine_lr {
            return self.cfg.lr;
        }
        let t = epoch.min(self.cfg.epochs) as f64 / self.cfg.epochs as f64;
        0.5 * self.cfg.lr * (1.0 + (std::f64::consts::PI * t).cos())
    }

    /// One pass over the source split followed by validation.
    pub fn train_epoch(&mut self, data: &TrainData) -> Result<EpochReport> {
        if data.source.is_empty() || data.target.is_empty() {
            return Err(Error::usage("training needs non-empty source and target splits"));
        }
        self.opt.lr = self.lr_at(self.epoch);
        let mut order: Vec<usize> = (0..data.source.len()).collect();
        order.shuffle(&mut self.shuffle);
        let params = self.net.parameters();
        let (mut seg_sum, mut d_sum, mut g_sum, mut batches) = (0.0, 0.0, 0.0, 0usize);
        for chunk in order.chunks(self.cfg.batch_size) {
            let sources: Vec<&SampleRecord> = chunk.iter().map(|&i| &data.source[i]).collect();
            let targets: Vec<&SampleRecord> =
                chunk.iter().map(|_| &data.target[self.shuffle.gen_range(0..data.target.len())]).collect();
            let (images, report) = self.prepare(&sources, &targets)?;
            let masks = stack(&sources.iter().map(|r| r.mask.as_ref().expect("source mask")).collect::<Vec<_>>())?;

            let out = self.net.forward(&images)?;
            let loss = seg_loss(&out.logits, &masks)?;
            zero_grads(&params);
            loss.backward()?;
            self.opt.step(&params)?;

            seg_sum += loss.item();
            if let Some(r) = report {
                d_sum += r.d_loss;
                g_sum += r.g_loss;
            }
            batches += 1;
        }
        self.epoch += 1;
        let n = batches as f64;
        let adl = self.cfg.flags.use_adl;
        Ok(EpochReport {
            epoch: self.epoch,
            seg_loss: seg_sum / n,
            d_loss: adl.then_some(d_sum / n),
            g_loss: adl.then_some(g_sum / n),
            val: evaluate(&self.net, &data.val, self.cfg.batch_size)?,
        })
    }
}

/// Pooled IoU/Dice of thresholded predictions over a labelled split.
pub fn evaluate(net: &SegmentationNet, samples: &[SampleRecord], batch_size: usize) -> Result<SegMetrics> {
    let mut total = SegMetrics::from_counts(0, 0, 0);
    for chunk in samples.chunks(batch_size.max(1)) {
        let images = stack(&chunk.iter().map(|r| &r.image).collect::<Vec<_>>())?;
        let probs = net.predict(&images)?;
        let pred = binarize(&probs.data(), 0.5)?;
        let per = pred.len() / chunk.len();
        for (i, r) in chunk.iter().enumerate() {
            let gt = r.mask.as_ref().ok_or_else(|| Error::usage(format!("sample {} has no mask", r.id)))?;
            total = total.merge(&iou_dice(&pred[i * per..(i + 1) * per], &gt.data())?);
        }
    }
    Ok(total)
}

/// Outcome of [`run_training`].
#[derive(Clone, Debug)]
pub struct RunSummary {
    pub reports: Vec<EpochReport>,
    pub out_dir: Option<PathBuf>,
}

impl RunSummary {
    pub fn final_metrics(&self) -> SegMetrics {
        self.reports.last().map(|r| r.val).unwrap_or_default()
    }
}

pub const CONFIG_FILE: &str = "config.txt";
pub const METRICS_FILE: &str = "metrics.csv";
pub const CHECKPOINT_FILE: &str = "model.ckpt";

/// Train for `cfg.epochs` epochs.
///
/// With an output directory, the config snapshot is written first, a CSV row
/// is appended after every epoch and the checkpoint is replaced after every
/// epoch, so a numerical failure leaves the last good epoch on disk.
pub fn run_training(
    cfg: &RunConfig,
    data: &TrainData,
    out_dir: Option<&Path>,
    mut progress: impl FnMut(&EpochReport),
) -> Result<RunSummary> {
    let mut trainer = Trainer::new(cfg.clone(), data.channels())?;
    let mut csv = match out_dir {
        Some(dir) => {
            std::fs::create_dir_all(dir)?;
            std::fs::write(dir.join(CONFIG_FILE), cfg.to_text())?;
            let mut f = File::create(dir.join(METRICS_FILE))?;
            writeln!(f, "{CSV_HEADER}")?;
            Some(f)
        }
        None => None,
    };
    let mut reports = Vec::with_capacity(cfg.epochs);
    for _ in 0..cfg.epochs {
        let report = trainer.train_epoch(data)?;
        if let (Some(dir), Some(f)) = (out_dir, csv.as_mut()) {
            writeln!(f, "{}", report.csv_row())?;
            f.flush()?;
            checkpoint::save(&dir.join(CHECKPOINT_FILE), &trainer.named_parameters())?;
        }
        progress(&report);
        reports.push(report);
    }
    Ok(RunSummary { reports, out_dir: out_dir.map(Path::to_path_buf) })
}

/// One row of an ablation table.
#[derive(Clone, Debug)]
pub struct AblationRow {
    pub name: &'static str,
    pub flags: AblationFlags,
    pub result: std::result::Result<SegMetrics, String>,
}

/// Train each configuration from the same seed and data.
///
/// `workers` caps how many configurations train at once.
pub fn ablation(
    cfg: &RunConfig,
    data: &TrainData,
    grid: &[(&'static str, AblationFlags)],
    out_root: Option<&Path>,
    workers: usize,
) -> Vec<AblationRow> {
    let run = |name: &'static str, flags: AblationFlags| {
        let mut c = cfg.clone();
        c.flags = flags;
        let dir = out_root.map(|r| r.join(name.trim_start_matches('+').replace('+', "-")));
        if let Some(d) = &dir {
            c.out_dir = d.clone();
        }
        let result = run_training(&c, data, dir.as_deref(), |_| {}).map(|s| s.final_metrics()).map_err(|e| e.to_string());
        AblationRow { name, flags, result }
    };
    let workers = workers.max(1);
    if workers == 1 {
        return grid.iter().map(|&(n, f)| run(n, f)).collect();
    }
    let mut rows = Vec::with_capacity(grid.len());
    for group in grid.chunks(workers) {
        let done: Vec<AblationRow> = std::thread::scope(|s| {
            let handles: Vec<_> = group.iter().map(|&(n, f)| s.spawn(move || run(n, f))).collect();
            handles.into_iter().map(|h| h.join().expect("ablation worker panicked")).collect()
        });
        rows.extend(done);
    }
    rows
}

/// Worker count from `FREQALIGN_THREADS`, default 1.
pub fn worker_count() -> usize {
    std::env::var("FREQALIGN_THREADS").ok().and_then(|v| v.parse().ok()).filter(|&n| n > 0).unwrap_or(1)
}

pub const ABLATION_HEADER: &str = "config,use_stff,use_adl,use_sfi,val_iou,val_dice,status";

pub fn ablation_csv(rows: &[AblationRow]) -> String {
    let mut out = format!("{ABLATION_HEADER}\n");
    for r in rows {
        let f = r.flags;
        let b = |v: bool| if v { "1" } else { "0" };
        let (iou, dice, status) = match &r.result {
            Ok(m) => (format!("{:.6}", m.iou), format!("{:.6}", m.dice), "ok".to_string()),
            Err(e) => (String::new(), String::new(), format!("failed: {}", e.replace([',', '\n'], ";"))),
        };
        out.push_str(&format!(
            "{},{},{},{},{iou},{dice},{status}\n",
            r.name,
            b(f.use_stff),
            b(f.use_adl),
            b(f.use_sfi)
        ));
    }
    out
}
