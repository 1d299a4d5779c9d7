use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use freqalign::commands::{self, FuseArgs, Overrides};
use freqalign::config::RunConfig;
use freqalign::network::AblationFlags;

#[derive(Parser)]
#[command(name = "freqalign", version, about = "Frequency-domain alignment for cross-domain segmentation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Blend a target image's low-frequency amplitude into a source image.
    Fuse {
        #[arg(long)]
        source: PathBuf,
        #[arg(long)]
        target: PathBuf,
        /// Mixing coefficient; drawn uniformly from the seed when omitted.
        #[arg(long)]
        alpha: Option<f64>,
        #[arg(long, default_value_t = 0.1)]
        beta: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Also write log-amplitude heatmaps of the three spectra.
        #[arg(long)]
        spectra: bool,
    },
    /// Write the synthetic two-domain dataset as image directories.
    Synth {
        /// Config file; only the synth_* and seed keys matter.
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train one configuration.
    Train {
        config: PathBuf,
        #[command(flatten)]
        overrides: OverrideArgs,
    },
    /// Score a checkpoint on the validation split and render overlays.
    Eval {
        config: PathBuf,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Output directory; defaults to `<out_dir>/eval`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train all seven module configurations and tabulate validation IoU.
    Ablate {
        config: PathBuf,
        #[command(flatten)]
        overrides: OverrideArgs,
    },
}

#[derive(clap::Args)]
struct OverrideArgs {
    /// Comma list from stff,adl,sfi, or `none` / `all`.
    #[arg(long)]
    flags: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
}

impl OverrideArgs {
    fn resolve(self) -> freqalign::Result<Overrides> {
        Ok(Overrides {
            flags: self.flags.as_deref().map(AblationFlags::parse).transpose()?,
            seed: self.seed,
            epochs: self.epochs,
            out: self.out,
        })
    }
}

fn run(cli: Cli) -> freqalign::Result<ExitCode> {
    match cli.command {
        Command::Fuse { source, target, alpha, beta, seed, out, spectra } => {
            for line in commands::fuse(&FuseArgs { source, target, alpha, beta, seed, out, spectra })? {
                println!("{line}");
            }
        }
        Command::Synth { config, seed, out } => {
            let mut cfg = config.map(|p| RunConfig::load(&p)).transpose()?.unwrap_or_default();
            if let Some(s) = seed {
                cfg.seed = s;
            }
            for line in commands::synth(&cfg, &out)? {
                println!("{line}");
            }
        }
        Command::Train { config, overrides } => {
            let cfg = overrides.resolve()?.apply(RunConfig::load(&config)?)?;
            let m = commands::train(&cfg, |row| println!("{row}"))?;
            println!("# final val IoU {:.4}  Dice {:.4}  ({})", m.iou, m.dice, cfg.out_dir.display());
        }
        Command::Eval { config, checkpoint, out } => {
            let cfg = RunConfig::load(&config)?;
            let out = out.unwrap_or_else(|| cfg.out_dir.join("eval"));
            for line in commands::eval(&cfg, checkpoint.as_deref(), &out)? {
                println!("{line}");
            }
        }
        Command::Ablate { config, overrides } => {
            let cfg = overrides.resolve()?.apply(RunConfig::load(&config)?)?;
            let (table, ok) = commands::ablate(&cfg)?;
            print!("{table}");
            if !ok {
                eprintln!("error: at least one configuration failed");
                return Ok(ExitCode::from(3));
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
