//! Train the seven module configurations on the synthetic task from one
//! seed and print the target-validation table.
//!
//!     cargo run --release --example ablation -- [seed] [epochs]
//!
//! `FREQALIGN_THREADS` lets several configurations train at once.

use std::time::Instant;

use freqalign::config::RunConfig;
use freqalign::network::AblationFlags;
use freqalign::train::{ablation, ablation_csv, worker_count, TrainData};

fn main() -> freqalign::Result<()> {
    let mut args = std::env::args().skip(1);
    let seed = args.next().and_then(|s| s.parse().ok()).unwrap_or(0);
    let epochs = args.next().and_then(|s| s.parse().ok()).unwrap_or(20);
    let cfg = RunConfig { seed, epochs, ..RunConfig::default() };
    let data = TrainData::from_config(&cfg)?;

    let start = Instant::now();
    let rows = ablation(&cfg, &data, &AblationFlags::ablation_grid(), None, worker_count());
    print!("{}", ablation_csv(&rows));
    println!("# {} configurations, {epochs} epochs, {:.0}s", rows.len(), start.elapsed().as_secs_f64());
    Ok(())
}
