//! Experiment configuration: one TOML file describes the data-generating
//! mixtures, split sizes, schedule, networks, objective, sampler, evaluation
//! settings and the four named seeds. Unknown keys are rejected.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::mixture::GaussianMixture;
use crate::nn::{Activation, AdamConfig, NetArch, TimeEmbed};
use crate::objectives::ObjectiveSpec;
use crate::sde::{Integrator, SamplerKind, SamplerSpec, VpSchedule};
use crate::training::{LrSchedule, TrainConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Seeds {
    pub data_seed: u64,
    pub disc_seed: u64,
    pub score_seed: u64,
    pub sample_seed: u64,
}

impl Seeds {
    /// `data = base, disc = base + 1, score = base + 2, sample = base + 3`.
    pub fn from_base(base: u64) -> Self {
        Self {
            data_seed: base,
            disc_seed: base.wrapping_add(1),
            score_seed: base.wrapping_add(2),
            sample_seed: base.wrapping_add(3),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSection {
    pub n_bias: usize,
    pub n_ref: usize,
    /// The biased distribution the large split is drawn from.
    pub bias: GaussianMixture,
    /// The unbiased target distribution of the reference split.
    pub target: GaussianMixture,
}

/// Network shape and optimizer settings; input and output widths follow from
/// the data dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetSection {
    pub hidden: Vec<usize>,
    pub activation: Activation,
    pub time_embed: TimeEmbed,
    pub steps: usize,
    pub batch_size: usize,
    pub adam: AdamConfig,
    pub lr_schedule: LrSchedule,
}

impl NetSection {
    fn toy(steps: usize, batch_size: usize) -> Self {
        let arch = NetArch::toy(1, 1);
        Self {
            hidden: arch.hidden,
            activation: arch.activation,
            time_embed: arch.time_embed,
            steps,
            batch_size,
            adam: AdamConfig::default(),
            lr_schedule: LrSchedule::Cosine,
        }
    }

    pub fn train_config(&self, input_dim: usize, output_dim: usize, seed: u64) -> TrainConfig {
        TrainConfig {
            arch: NetArch {
                input_dim,
                output_dim,
                hidden: self.hidden.clone(),
                activation: self.activation,
                time_embed: self.time_embed,
            },
            steps: self.steps,
            batch_size: self.batch_size,
            adam: self.adam,
            lr_schedule: self.lr_schedule,
            seed,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplerSection {
    pub kind: SamplerKind,
    pub steps: usize,
    pub integrator: Integrator,
    pub n_samples: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalSection {
    /// Oracle target draws that model samples are compared against.
    pub n_reference: usize,
    /// Number of equally spaced times on `[0, T]` for the ratio-error curve.
    pub dre_grid: usize,
    /// Monte-Carlo draws per ratio-error evaluation.
    pub dre_samples: usize,
    /// Lattice points per axis for the vector-field dump.
    pub field_resolution: usize,
    /// The lattice covers `[-field_extent, field_extent]` per axis.
    pub field_extent: f64,
    /// Training telemetry is recorded every this many steps (0 disables).
    pub telemetry_every: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub alphas: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub output_dir: PathBuf,
    pub seeds: Seeds,
    pub data: DataSection,
    pub schedule: VpSchedule,
    pub discriminator: NetSection,
    pub score: NetSection,
    pub objective: ObjectiveSpec,
    pub sampler: SamplerSection,
    pub eval: EvalSection,
    pub sweep: SweepSection,
}

impl Default for ExperimentConfig {
    /// The two-mode 2-D setup: 0.9/0.1 biased vs 0.5/0.5 target at
    /// `±(2, 2)` with unit variances, 1000 biased and 100 reference points.
    fn default() -> Self {
        Self {
            output_dir: PathBuf::from("runs/default"),
            seeds: Seeds::from_base(0),
            data: DataSection {
                n_bias: 1000,
                n_ref: 100,
                bias: GaussianMixture::two_mode(2, 0.1).expect("valid"),
                target: GaussianMixture::two_mode(2, 0.5).expect("valid"),
            },
            schedule: VpSchedule::default(),
            discriminator: NetSection::toy(10_000, 128),
            score: NetSection::toy(10_000, 256),
            objective: ObjectiveSpec::tiw_dsm(),
            sampler: SamplerSection {
                kind: SamplerKind::ProbabilityFlowOde,
                steps: 200,
                integrator: Integrator::Heun,
                n_samples: 2000,
            },
            eval: EvalSection {
                n_reference: 2000,
                dre_grid: 21,
                dre_samples: 4000,
                field_resolution: 25,
                field_extent: 5.0,
                telemetry_every: 100,
            },
            sweep: SweepSection {
                alphas: vec![0.0, 0.25, 0.5, 0.75, 1.0],
            },
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is always representable as TOML")
    }

    /// Hex `sha256` of the canonical TOML serialization.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_toml().as_bytes()))
    }

    pub fn dim(&self) -> usize {
        self.data.target.dim()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.data.bias.dim() != self.data.target.dim() {
            return bad(format!(
                "bias mixture has dimension {}, target has {}",
                self.data.bias.dim(),
                self.data.target.dim()
            ));
        }
        if self.data.n_bias == 0 || self.data.n_ref == 0 {
            return bad(format!(
                "split sizes must be >= 1 (n_bias = {}, n_ref = {})",
                self.data.n_bias, self.data.n_ref
            ));
        }
        self.schedule
            .validate()
            .map_err(|e| Error::Config(format!("schedule: {e}")))?;
        self.objective
            .validate(&self.schedule)
            .map_err(|e| Error::Config(format!("objective: {e}")))?;
        for (name, net) in [("discriminator", &self.discriminator), ("score", &self.score)] {
            net.train_config(self.dim(), self.dim(), 0)
                .validate()
                .map_err(|e| Error::Config(format!("{name}: {e}")))?;
        }
        self.sampler_spec()
            .validate()
            .map_err(|e| Error::Config(format!("sampler: {e}")))?;
        if self.sampler.n_samples < 2 || self.eval.n_reference < 2 {
            return bad("sampler.n_samples and eval.n_reference must be >= 2".into());
        }
        if self.eval.dre_grid < 2 || self.eval.dre_samples == 0 || self.eval.field_resolution == 0 {
            return bad("eval.dre_grid >= 2, eval.dre_samples >= 1 and eval.field_resolution >= 1 required".into());
        }
        if !(self.eval.field_extent > 0.0) {
            return bad("eval.field_extent must be positive".into());
        }
        if let Some(a) = self.sweep.alphas.iter().find(|a| !(**a >= 0.0 && a.is_finite())) {
            return bad(format!("sweep alphas must be >= 0, got {a}"));
        }
        Ok(())
    }

    pub fn sampler_spec(&self) -> SamplerSpec {
        SamplerSpec {
            kind: self.sampler.kind,
            steps: self.sampler.steps,
            integrator: self.sampler.integrator,
            seed: self.seeds.sample_seed,
        }
    }

    pub fn disc_train_config(&self) -> TrainConfig {
        self.discriminator
            .train_config(self.dim(), 1, self.seeds.disc_seed)
    }

    pub fn score_train_config(&self) -> TrainConfig {
        self.score
            .train_config(self.dim(), self.dim(), self.seeds.score_seed)
    }

    /// The target mixture component with the smallest weight under the bias
    /// mixture, when components line up one to one.
    pub fn minority_component(&self) -> usize {
        let w = if self.data.bias.components().len() == self.data.target.components().len() {
            self.data.bias.weights()
        } else {
            self.data.target.weights()
        };
        w.iter()
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(b.1))
            .map(|(i, _)| i)
            .unwrap_or(0)
    }
}

/// Command-line overrides; every field left unset keeps the config value.
#[derive(Debug, Clone, Default, PartialEq, clap::Args)]
pub struct Overrides {
    /// Directory that receives every artifact.
    #[arg(long)]
    pub output_dir: Option<PathBuf>,
    /// Sets all four seeds: data = SEED, disc = SEED+1, score = SEED+2, sample = SEED+3.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub data_seed: Option<u64>,
    #[arg(long)]
    pub disc_seed: Option<u64>,
    #[arg(long)]
    pub score_seed: Option<u64>,
    #[arg(long)]
    pub sample_seed: Option<u64>,
    /// Sampler steps.
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long, value_enum)]
    pub integrator: Option<Integrator>,
    /// Sampler kind.
    #[arg(long, value_enum)]
    pub kind: Option<SamplerKind>,
    #[arg(long)]
    pub n_samples: Option<usize>,
    #[arg(long, value_enum)]
    pub objective: Option<crate::objectives::ObjectiveKind>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub tau: Option<f64>,
    #[arg(long)]
    pub n_bias: Option<usize>,
    #[arg(long)]
    pub n_ref: Option<usize>,
    #[arg(long)]
    pub disc_steps: Option<usize>,
    #[arg(long)]
    pub score_steps: Option<usize>,
}

impl Overrides {
    /// Applies the overrides and re-validates the result.
    pub fn apply(&self, cfg: &mut ExperimentConfig) -> Result<()> {
        if let Some(v) = &self.output_dir {
            cfg.output_dir = v.clone();
        }
        if let Some(v) = self.seed {
            cfg.seeds = Seeds::from_base(v);
        }
        let set = |slot: &mut u64, v: Option<u64>| {
            if let Some(v) = v {
                *slot = v;
            }
        };
        set(&mut cfg.seeds.data_seed, self.data_seed);
        set(&mut cfg.seeds.disc_seed, self.disc_seed);
        set(&mut cfg.seeds.score_seed, self.score_seed);
        set(&mut cfg.seeds.sample_seed, self.sample_seed);
        if let Some(v) = self.steps {
            cfg.sampler.steps = v;
        }
        if let Some(v) = self.integrator {
            cfg.sampler.integrator = v;
        }
        if let Some(v) = self.kind {
            cfg.sampler.kind = v;
        }
        if let Some(v) = self.n_samples {
            cfg.sampler.n_samples = v;
        }
        if let Some(v) = self.objective {
            cfg.objective.kind = v;
        }
        if let Some(v) = self.alpha {
            cfg.objective.alpha = v;
        }
        if let Some(v) = self.tau {
            cfg.objective.tau = v;
        }
        if let Some(v) = self.n_bias {
            cfg.data.n_bias = v;
        }
        if let Some(v) = self.n_ref {
            cfg.data.n_ref = v;
        }
        if let Some(v) = self.disc_steps {
            cfg.discriminator.steps = v;
        }
        if let Some(v) = self.score_steps {
            cfg.score.steps = v;
        }
        cfg.validate()
    }
}
