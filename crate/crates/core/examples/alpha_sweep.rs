//! Sweeps the ratio exponent from plain denoising (0) to full reweighting
//! (1) with a shortened training budget, writing one row per exponent.

use tiwlab::commands::cmd_sweep_alpha;
use tiwlab::config::ExperimentConfig;

fn main() -> tiwlab::Result<()> {
    let mut cfg = ExperimentConfig::default();
    cfg.output_dir = std::env::args().nth(1).unwrap_or_else(|| "runs/example_sweep".into()).into();
    cfg.discriminator.steps = 3000;
    cfg.score.steps = 3000;
    cfg.sampler.n_samples = 1000;
    let report = cmd_sweep_alpha(&cfg, &[0.0, 0.25, 0.5, 0.75, 1.0])?;
    for row in &report.metrics {
        println!("{:12} energy {:.4}  minority {:.3}", row.name, row.energy_distance, row.minority);
    }
    Ok(())
}
