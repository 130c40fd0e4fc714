//! The full pipeline through the command layer: data, time-aware
//! discriminator, score models for each baseline, samples and metrics.
//! Artifacts land in `runs/example_debias` unless a directory is given.
//!
//! This trains five networks at full size and takes a few minutes.

use tiwlab::commands::cmd_debias;
use tiwlab::config::ExperimentConfig;

fn main() -> tiwlab::Result<()> {
    let mut cfg = ExperimentConfig::default();
    cfg.output_dir = std::env::args().nth(1).unwrap_or_else(|| "runs/example_debias".into()).into();
    let report = cmd_debias(&cfg, true)?;
    println!("{:10} {:>8} {:>8} {:>9}", "model", "bias", "energy", "minority");
    for row in &report.metrics {
        println!("{:10} {:8.4} {:8.4} {:9.3}", row.name, row.bias, row.energy_distance, row.minority);
    }
    for a in &report.artifacts {
        println!("wrote {}", a.display());
    }
    Ok(())
}
