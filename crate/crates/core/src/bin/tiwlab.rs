use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use tiwlab::commands::{self, RunReport};
use tiwlab::config::{ExperimentConfig, Overrides};

#[derive(Parser)]
#[command(name = "tiwlab", version, about = "Time-dependent importance reweighting on Gaussian mixtures")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML experiment config; built-in defaults when omitted.
    #[arg(long, short)]
    config: Option<PathBuf>,
    #[command(flatten)]
    overrides: Overrides,
}

#[derive(Subcommand)]
enum Command {
    /// Write the biased and reference splits.
    GenData(Common),
    /// Train a discriminator.
    TrainDisc {
        #[command(flatten)]
        common: Common,
        /// Train the time-independent variant instead.
        #[arg(long)]
        time_independent: bool,
    },
    /// Train a score network under the configured objective.
    TrainScore(Common),
    /// Generate samples from the trained score.
    Sample {
        #[command(flatten)]
        common: Common,
        /// Use the exact score of the target mixture.
        #[arg(long)]
        oracle: bool,
    },
    /// Evaluate generated samples against oracle target draws.
    Eval(Common),
    /// Ratio-estimation error over diffusion time.
    ReproFig2(Common),
    /// Time-zero score, ratio and ratio-gradient fields on a lattice.
    ReproFig3(Common),
    /// Full pipeline: data, discriminator, score, samples, metrics.
    Debias {
        #[command(flatten)]
        common: Common,
        /// Run dsm_ref, dsm_obs, iw_dsm and tiw_dsm.
        #[arg(long)]
        all_baselines: bool,
    },
    /// One model per ratio exponent.
    SweepAlpha {
        #[command(flatten)]
        common: Common,
        /// Comma-separated exponents; defaults to the config's sweep list.
        #[arg(long, value_delimiter = ',')]
        alphas: Option<Vec<f64>>,
    },
}

fn load(common: &Common) -> tiwlab::Result<ExperimentConfig> {
    let mut cfg = match &common.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    common.overrides.apply(&mut cfg)?;
    Ok(cfg)
}

fn run(cli: Cli) -> tiwlab::Result<RunReport> {
    match cli.command {
        Command::GenData(c) => commands::cmd_gen_data(&load(&c)?),
        Command::TrainDisc {
            common,
            time_independent,
        } => commands::cmd_train_disc(&load(&common)?, !time_independent),
        Command::TrainScore(c) => commands::cmd_train_score(&load(&c)?),
        Command::Sample { common, oracle } => commands::cmd_sample(&load(&common)?, oracle),
        Command::Eval(c) => commands::cmd_eval(&load(&c)?),
        Command::ReproFig2(c) => commands::cmd_repro_fig2(&load(&c)?).map(|(r, _)| r),
        Command::ReproFig3(c) => commands::cmd_repro_fig3(&load(&c)?),
        Command::Debias {
            common,
            all_baselines,
        } => commands::cmd_debias(&load(&common)?, all_baselines),
        Command::SweepAlpha { common, alphas } => {
            let cfg = load(&common)?;
            let alphas = alphas.unwrap_or_else(|| cfg.sweep.alphas.clone());
            commands::cmd_sweep_alpha(&cfg, &alphas)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(report) => {
            for row in &report.metrics {
                println!(
                    "{:<12} bias {:.4}  energy distance {:.4}  minority {:.4}",
                    row.name, row.bias, row.energy_distance, row.minority
                );
            }
            for note in &report.notes {
                println!("{note}");
            }
            for a in &report.artifacts {
                println!("wrote {}", a.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            let cat = e.category();
            eprintln!("error ({cat:?}): {e}");
            ExitCode::from(cat.exit_code() as u8)
        }
    }
}
