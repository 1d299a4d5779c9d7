//! Train one configuration on the synthetic two-domain task and print the
//! per-epoch CSV rows.
//!
//!     cargo run --release --example train_synthetic -- [flags] [seed] [epochs]
//!
//! `flags` is a comma list drawn from `stff,adl,sfi`, or `none` / `all`.

use std::time::Instant;

use freqalign::config::RunConfig;
use freqalign::network::AblationFlags;
use freqalign::train::{run_training, TrainData, CSV_HEADER};

fn main() -> freqalign::Result<()> {
    let mut args = std::env::args().skip(1);
    let flags = AblationFlags::parse(&args.next().unwrap_or_else(|| "all".into()))?;
    let seed = args.next().and_then(|s| s.parse().ok()).unwrap_or(0);
    let epochs = args.next().and_then(|s| s.parse().ok()).unwrap_or(20);
    let cfg = RunConfig { flags, seed, epochs, ..RunConfig::default() };

    let data = TrainData::from_config(&cfg)?;
    println!("# flags {}  seed {seed}  source {}  target {}  val {}", flags.label(), data.source.len(), data.target.len(), data.val.len());
    println!("{CSV_HEADER}");
    let start = Instant::now();
    let summary = run_training(&cfg, &data, None, |r| println!("{}", r.csv_row()))?;
    let m = summary.final_metrics();
    println!("# final IoU {:.4}  Dice {:.4}  in {:.1}s", m.iou, m.dice, start.elapsed().as_secs_f64());
    Ok(())
}
