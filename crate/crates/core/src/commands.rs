//! Implementations behind the `freqalign` subcommands.
//!
//! Each function does the work and returns the lines it wants printed; the
//! binary only parses arguments and maps errors to exit codes.

use std::path::{Path, PathBuf};

use crate::checkpoint;
use crate::config::RunConfig;
use crate::data::{synth_dataset, SampleRecord};
use crate::error::{Error, Result};
use crate::fusion::{AlphaMode, FrequencyFusion, FusionConfig};
use crate::io::{overlay, read_image, spectrum_heatmap, write_png};
use crate::metrics::{binarize, iou_dice, SegMetrics};
use crate::network::AblationFlags;
use crate::spectral::{decompose, Spectrum};
use crate::tensor::Tensor;
use crate::train::{ablation, ablation_csv, evaluate, run_training, worker_count, TrainData, Trainer, CHECKPOINT_FILE};

#[derive(Clone, Debug)]
pub struct FuseArgs {
    pub source: PathBuf,
    pub target: PathBuf,
    /// Fixed `α`; drawn from the seed when absent.
    pub alpha: Option<f64>,
    pub beta: f64,
    pub seed: u64,
    pub out: PathBuf,
    /// Also write log-amplitude heatmaps next to the output.
    pub spectra: bool,
}

fn resize(image: &Tensor, h: usize, w: usize) -> Result<Tensor> {
    let &[c, ih, iw] = image.shape() else { unreachable!("images are [C, H, W]") };
    let out = image.reshape(vec![1, c, ih, iw])?.bilinear_resample(h, w)?;
    Tensor::new(vec![c, h, w], out.to_vec())
}

fn match_channels(image: &Tensor, channels: usize) -> Result<Tensor> {
    let &[c, h, w] = image.shape() else { unreachable!("images are [C, H, W]") };
    if c == channels {
        return Ok(image.clone());
    }
    let plane = h * w;
    let data = image.data();
    let out: Vec<f64> = match (c, channels) {
        (3, 1) => (0..plane).map(|i| (data[i] + data[plane + i] + data[2 * plane + i]) / 3.0).collect(),
        (1, 3) => data.iter().cycle().take(3 * plane).copied().collect(),
        _ => return Err(Error::usage(format!("cannot convert {c} channels to {channels}"))),
    };
    Tensor::new(vec![channels, h, w], out)
}

fn sibling(out: &Path, suffix: &str) -> PathBuf {
    let stem = out.file_stem().and_then(|s| s.to_str()).unwrap_or("fused");
    out.with_file_name(format!("{stem}_{suffix}.png"))
}

/// Fuse a target style into a source image and write the result.
pub fn fuse(args: &FuseArgs) -> Result<Vec<String>> {
    let mut log = Vec::new();
    let source = read_image(&args.source)?;
    let mut target = read_image(&args.target)?;
    let &[c, h, w] = source.shape() else { unreachable!() };
    if target.shape()[0] != c {
        target = match_channels(&target, c)?;
    }
    if target.shape()[1..] != [h, w] {
        log.push(format!(
            "warning: target is {}x{}, resampled to the source size {h}x{w}",
            target.shape()[1],
            target.shape()[2]
        ));
        target = resize(&target, h, w)?;
    }
    let cfg = FusionConfig {
        beta: args.beta,
        alpha: args.alpha.map(AlphaMode::Fixed).unwrap_or(AlphaMode::Uniform),
        seed: args.seed,
        ..FusionConfig::default()
    };
    let fused = FrequencyFusion::new(cfg)?.fuse(&source, &target)?;
    if let Some(dir) = args.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    write_png(&args.out, &fused.fused_image)?;
    log.push(format!("alpha = {:.6}", fused.alpha_used));
    log.push(format!("wrote {}", args.out.display()));
    if args.spectra {
        let outputs: [(&str, Spectrum); 3] = [
            ("source_spectrum", decompose(&source)?),
            ("target_spectrum", decompose(&target)?),
            ("fused_spectrum", fused.spectrum.clone()),
        ];
        for (name, spec) in outputs {
            let path = sibling(&args.out, name);
            write_png(&path, &spectrum_heatmap(&spec)?)?;
            log.push(format!("wrote {}", path.display()));
        }
    }
    Ok(log)
}

fn write_split(dir: &Path, records: &[SampleRecord]) -> Result<()> {
    std::fs::create_dir_all(dir.join("images"))?;
    for r in records {
        write_png(&dir.join("images").join(format!("{}.png", r.id)), &r.image)?;
        if let Some(m) = &r.mask {
            std::fs::create_dir_all(dir.join("masks"))?;
            write_png(&dir.join("masks").join(format!("{}.png", r.id)), m)?;
        }
    }
    Ok(())
}

/// Write the synthetic task as `source/`, `target/` and `val/` directories
/// in the layout `load_dir` reads.
pub fn synth(cfg: &RunConfig, out: &Path) -> Result<Vec<String>> {
    let data = synth_dataset(&cfg.synth_config())?;
    write_split(&out.join("source"), &data.source)?;
    write_split(&out.join("target"), &data.target)?;
    write_split(&out.join("val"), &data.target_val)?;
    Ok(vec![format!(
        "wrote {} source, {} target and {} validation samples to {}",
        data.source.len(),
        data.target.len(),
        data.target_val.len(),
        out.display()
    )])
}

/// Command-line overrides applied on top of a config file.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub flags: Option<AblationFlags>,
    pub seed: Option<u64>,
    pub epochs: Option<usize>,
    pub out: Option<PathBuf>,
}

impl Overrides {
    pub fn apply(&self, mut cfg: RunConfig) -> Result<RunConfig> {
        if let Some(f) = self.flags {
            cfg.flags = f;
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(e) = self.epochs {
            cfg.epochs = e;
        }
        if let Some(o) = &self.out {
            cfg.out_dir = o.clone();
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Train, writing the config snapshot, metrics CSV and checkpoint into
/// `cfg.out_dir`. `on_row` sees every CSV row as it is produced.
pub fn train(cfg: &RunConfig, mut on_row: impl FnMut(&str)) -> Result<SegMetrics> {
    let data = TrainData::from_config(cfg)?;
    on_row(crate::train::CSV_HEADER);
    let summary = run_training(cfg, &data, Some(&cfg.out_dir), |r| on_row(&r.csv_row()))?;
    Ok(summary.final_metrics())
}

/// Score a checkpoint on the validation split and write overlays.
pub fn eval(cfg: &RunConfig, checkpoint_path: Option<&Path>, out: &Path) -> Result<Vec<String>> {
    let data = TrainData::from_config(cfg)?;
    let trainer = Trainer::new(cfg.clone(), data.channels())?;
    let ckpt = checkpoint_path.map(Path::to_path_buf).unwrap_or_else(|| cfg.out_dir.join(CHECKPOINT_FILE));
    checkpoint::load_into(&ckpt, &trainer.named_parameters())?;

    let overlays = out.join("overlays");
    std::fs::create_dir_all(&overlays)?;
    let mut rows = vec!["id,iou,dice".to_string()];
    for r in &data.val {
        let &[c, h, w] = r.image.shape() else { unreachable!() };
        let probs = trainer.net.predict(&r.image.reshape(vec![1, c, h, w])?)?;
        let pred = binarize(&probs.data(), 0.5)?;
        let m = iou_dice(&pred, &r.mask.as_ref().expect("validation mask").data())?;
        rows.push(format!("{},{:.6},{:.6}", r.id, m.iou, m.dice));
        write_png(&overlays.join(format!("{}.png", r.id)), &overlay(&r.image, &pred)?)?;
    }
    let pooled = evaluate(&trainer.net, &data.val, cfg.batch_size)?;
    rows.push(format!("pooled,{:.6},{:.6}", pooled.iou, pooled.dice));
    std::fs::write(out.join("eval.csv"), rows.join("\n") + "\n")?;
    Ok(vec![
        format!("IoU {:.4}  Dice {:.4} over {} samples", pooled.iou, pooled.dice, data.val.len()),
        format!("wrote {} and {} overlays", out.join("eval.csv").display(), data.val.len()),
    ])
}

/// Run the seven-configuration ablation. Rows that failed are marked in the
/// table and turn the overall result into a numerical error.
pub fn ablate(cfg: &RunConfig) -> Result<(String, bool)> {
    let data = TrainData::from_config(cfg)?;
    let rows = ablation(cfg, &data, &AblationFlags::ablation_grid(), Some(&cfg.out_dir), worker_count());
    let table = ablation_csv(&rows);
    std::fs::create_dir_all(&cfg.out_dir)?;
    std::fs::write(cfg.out_dir.join("ablation.csv"), &table)?;
    let ok = rows.iter().all(|r| r.result.is_ok());
    Ok((table, ok))
}
