//! The experiment commands behind the `tiwlab` binary.
//!
//! Each command is a pure function of the configuration: data splits are
//! regenerated from `data_seed`, and trained networks are cached in the
//! output directory under a key derived from every config field that
//! influences them, so a later command reuses an earlier checkpoint only
//! when it would have trained the identical network.

use std::path::{Path, PathBuf};
use std::time::Instant;

use ndarray::Array2;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::ExperimentConfig;
use crate::error::{Error, Result};
use crate::io;
use crate::metrics;
use crate::nn::{Checkpoint, Mlp};
use crate::objectives::{train_score, Objective, ObjectiveKind, ObjectiveSpec, ScoreReport};
use crate::ratio::{self, DatasetSplit, DiscConfig, RatioModel};
use crate::rng;
use crate::sampler::{self, GenerationJob, Provenance, ScoreSource, ROLE_SCORE};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stage {
    pub name: String,
    pub wall_seconds: f64,
}

/// One evaluated model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    pub name: String,
    pub bias: f64,
    pub energy_distance: f64,
    /// Soft proportion of the minority component.
    pub minority: f64,
    pub proportions: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub command: String,
    pub config_hash: String,
    pub library_version: String,
    pub stages: Vec<Stage>,
    pub metrics: Vec<EvalRow>,
    pub artifacts: Vec<PathBuf>,
    pub notes: Vec<String>,
}

/// Outputs of the ratio-error experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fig2Summary {
    pub integrated_ratio: f64,
    pub mse_t0: f64,
    pub mse_t04: f64,
    pub curve: Vec<ratio::DrePoint>,
}

struct Run<'a> {
    cfg: &'a ExperimentConfig,
    report: RunReport,
}

impl<'a> Run<'a> {
    fn new(cfg: &'a ExperimentConfig, command: &str) -> Result<Self> {
        cfg.validate()?;
        std::fs::create_dir_all(&cfg.output_dir).map_err(|e| Error::io(&cfg.output_dir, e))?;
        Ok(Self {
            cfg,
            report: RunReport {
                command: command.to_string(),
                config_hash: cfg.hash(),
                library_version: env!("CARGO_PKG_VERSION").to_string(),
                stages: Vec::new(),
                metrics: Vec::new(),
                artifacts: Vec::new(),
                notes: Vec::new(),
            },
        })
    }

    fn path(&self, rel: &str) -> PathBuf {
        self.cfg.output_dir.join(rel)
    }

    fn stage<T>(&mut self, name: &str, f: impl FnOnce(&mut Self) -> Result<T>) -> Result<T> {
        let start = Instant::now();
        let out = f(self)?;
        self.report.stages.push(Stage {
            name: name.to_string(),
            wall_seconds: start.elapsed().as_secs_f64(),
        });
        Ok(out)
    }

    fn emitted(&mut self, path: PathBuf) {
        if !self.report.artifacts.contains(&path) {
            self.report.artifacts.push(path);
        }
    }

    fn finish(mut self) -> Result<RunReport> {
        let path = self.path(&format!("{}_report.toml", self.report.command));
        self.emitted(path.clone());
        io::write_toml(&path, &self.report)?;
        Ok(self.report)
    }
}

fn key(parts: &[&str]) -> String {
    let mut h = Sha256::new();
    for p in parts {
        h.update(p.as_bytes());
        h.update([0u8]);
    }
    hex::encode(h.finalize())
}

fn toml_of<T: Serialize>(v: &T) -> String {
    toml::to_string(v).expect("serializable")
}

fn data_key(cfg: &ExperimentConfig) -> String {
    key(&[&toml_of(&cfg.data), &cfg.seeds.data_seed.to_string()])
}

fn disc_key(cfg: &ExperimentConfig, time_dependent: bool) -> String {
    key(&[
        "disc",
        &data_key(cfg),
        &toml_of(&cfg.schedule),
        &toml_of(&cfg.discriminator),
        &cfg.seeds.disc_seed.to_string(),
        &time_dependent.to_string(),
    ])
}

/// Which discriminator, if any, an objective consumes.
fn disc_for(spec: &ObjectiveSpec) -> Option<bool> {
    match spec.kind {
        ObjectiveKind::Dsm | ObjectiveKind::SmOracle => None,
        ObjectiveKind::IwDsm => Some(false),
        _ => Some(true),
    }
}

fn score_key(cfg: &ExperimentConfig, spec: &ObjectiveSpec) -> String {
    let disc = disc_for(spec).map(|td| disc_key(cfg, td)).unwrap_or_default();
    key(&[
        "score",
        &data_key(cfg),
        &toml_of(&cfg.schedule),
        &toml_of(&cfg.score),
        &cfg.seeds.score_seed.to_string(),
        &toml_of(spec),
        &disc,
    ])
}

const KEY_FIELD: &str = "config_key";

fn cached_checkpoint(path: &Path, expected: &str) -> Option<Checkpoint> {
    let ck = Checkpoint::load(path).ok()?;
    (ck.field(KEY_FIELD) == Some(expected)).then_some(ck)
}

fn split_of(cfg: &ExperimentConfig) -> Result<DatasetSplit> {
    DatasetSplit::generate(
        &cfg.data.bias,
        &cfg.data.target,
        cfg.data.n_bias,
        cfg.data.n_ref,
        cfg.seeds.data_seed,
    )
}

fn disc_file(time_dependent: bool) -> &'static str {
    if time_dependent {
        "disc_time_dependent.ckpt"
    } else {
        "disc_time_independent.ckpt"
    }
}

fn ensure_disc(run: &mut Run<'_>, split: &DatasetSplit, time_dependent: bool) -> Result<RatioModel> {
    let cfg = run.cfg;
    let path = run.path(disc_file(time_dependent));
    let k = disc_key(cfg, time_dependent);
    if let Some(ck) = cached_checkpoint(&path, &k) {
        return RatioModel::from_checkpoint(ck, cfg.schedule);
    }
    let name = if time_dependent {
        "train discriminator (time-dependent)"
    } else {
        "train discriminator (time-independent)"
    };
    let (model, rep) = run.stage(name, |_| {
        ratio::train_discriminator(
            split,
            &cfg.schedule,
            &DiscConfig {
                train: cfg.disc_train_config(),
                time_dependent,
            },
        )
    })?;
    model
        .to_checkpoint()
        .expect("learned model")
        .with_field(KEY_FIELD, k)
        .with_field("final_tbce", rep.final_tbce.to_string())
        .with_field("heldout_tbce", rep.heldout_tbce.to_string())
        .save(&path)?;
    run.emitted(path);
    Ok(model)
}

fn write_telemetry(path: &Path, rep: &ScoreReport) -> Result<()> {
    let header = ["step", "t", "weight", "loss", "batch_loss"].map(String::from);
    let rows: Vec<Vec<String>> = rep
        .telemetry
        .iter()
        .map(|r| {
            vec![
                r.step.to_string(),
                r.t.to_string(),
                r.weight.to_string(),
                r.loss.to_string(),
                r.batch_loss.to_string(),
            ]
        })
        .collect();
    io::write_table(path, &header, &rows)
}

/// Trains (or reuses) the score network for `spec` under `dir`.
fn ensure_score(run: &mut Run<'_>, spec: &ObjectiveSpec, dir: &str) -> Result<PathBuf> {
    let cfg = run.cfg;
    let ckpt = run.path(&format!("{dir}score.ckpt"));
    let k = score_key(cfg, spec);
    if cached_checkpoint(&ckpt, &k).is_some() {
        return Ok(ckpt);
    }
    let split = split_of(cfg)?;
    let disc = match disc_for(spec) {
        Some(td) => Some(ensure_disc(run, &split, td)?),
        None => None,
    };
    let objective = if spec.kind == ObjectiveKind::SmOracle {
        Objective::sm_oracle(&cfg.data.target, cfg.schedule, spec.lambda)?
    } else {
        Objective::new(spec.clone(), cfg.schedule, disc.as_ref())?
    };
    let (net, rep): (Mlp, ScoreReport) = run.stage(&format!("train score ({})", spec.kind.name()), |_| {
        train_score(&split, &objective, &cfg.score_train_config(), cfg.eval.telemetry_every)
    })?;
    Checkpoint::new(ROLE_SCORE, net)
        .with_field(KEY_FIELD, k)
        .with_field("objective", spec.kind.name())
        .with_field("final_loss", rep.final_loss.to_string())
        .save(&ckpt)?;
    run.emitted(ckpt.clone());
    let tele = run.path(&format!("{dir}telemetry.csv"));
    write_telemetry(&tele, &rep)?;
    run.emitted(tele);
    Ok(ckpt)
}

/// Generates (or reuses) samples from the checkpoint at `ckpt`.
fn ensure_samples(run: &mut Run<'_>, ckpt: PathBuf, dir: &str) -> Result<Array2<f64>> {
    let cfg = run.cfg;
    let out = run.path(&format!("{dir}samples.csv"));
    let job = GenerationJob {
        source: ScoreSource::Checkpoint(ckpt),
        sched: cfg.schedule,
        spec: cfg.sampler_spec(),
        n: cfg.sampler.n_samples,
    };
    let mut side = out.as_os_str().to_owned();
    side.push(".provenance.toml");
    if let Ok(prev) = io::read_toml::<Provenance>(Path::new(&side)) {
        let bytes = match &job.source {
            ScoreSource::Checkpoint(p) => std::fs::read(p).map_err(|e| Error::io(p, e))?,
            ScoreSource::Oracle(_) => Vec::new(),
        };
        let same_source = hex::encode(Sha256::digest(&bytes)) == prev.source_hash;
        if same_source && prev.job() == job {
            if let Ok(m) = io::read_matrix(&out) {
                return Ok(m);
            }
        }
    }
    let (m, prov) = run.stage("generate", |_| sampler::generate(&job))?;
    let side = sampler::write_samples(&out, &m, &prov)?;
    run.emitted(out);
    run.emitted(side);
    Ok(m)
}

fn reference_samples(cfg: &ExperimentConfig) -> Result<Array2<f64>> {
    cfg.data.target.sample(
        cfg.eval.n_reference,
        rng::derive_seed(cfg.seeds.sample_seed, "eval-reference"),
    )
}

fn eval_row(cfg: &ExperimentConfig, name: &str, samples: &Array2<f64>, reference: &Array2<f64>) -> Result<EvalRow> {
    let r = metrics::evaluate(samples, reference, &cfg.data.target)?;
    Ok(EvalRow {
        name: name.to_string(),
        bias: r.bias,
        energy_distance: r.energy_distance,
        minority: r.proportions[cfg.minority_component()],
        proportions: r.proportions,
    })
}

fn write_eval_rows(path: &Path, rows: &[EvalRow], extra: Option<(&str, &[f64])>) -> Result<()> {
    let k = rows.first().map(|r| r.proportions.len()).unwrap_or(0);
    let mut header: Vec<String> = Vec::new();
    if let Some((name, _)) = extra {
        header.push(name.to_string());
    }
    header.extend(["name", "bias", "energy_distance", "minority"].map(String::from));
    header.extend((0..k).map(|i| format!("prop_{i}")));
    let table: Vec<Vec<String>> = rows
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let mut row = Vec::new();
            if let Some((_, vals)) = extra {
                row.push(vals[i].to_string());
            }
            row.extend([
                r.name.clone(),
                r.bias.to_string(),
                r.energy_distance.to_string(),
                r.minority.to_string(),
            ]);
            row.extend(r.proportions.iter().map(|p| p.to_string()));
            row
        })
        .collect();
    io::write_table(path, &header, &table)
}

/// Writes `bias.csv` and `ref.csv`.
pub fn cmd_gen_data(cfg: &ExperimentConfig) -> Result<RunReport> {
    let mut run = Run::new(cfg, "gen-data")?;
    let split = run.stage("generate data", |_| split_of(cfg))?;
    for (name, m) in [("bias.csv", &split.bias), ("ref.csv", &split.reference)] {
        let p = run.path(name);
        io::write_matrix(&p, m)?;
        run.emitted(p);
    }
    run.finish()
}

/// Trains the time-dependent discriminator, or the time-independent one.
pub fn cmd_train_disc(cfg: &ExperimentConfig, time_dependent: bool) -> Result<RunReport> {
    let mut run = Run::new(cfg, "train-disc")?;
    let split = split_of(cfg)?;
    ensure_disc(&mut run, &split, time_dependent)?;
    let path = run.path(disc_file(time_dependent));
    run.emitted(path);
    run.finish()
}

/// Trains the score network under the configured objective.
pub fn cmd_train_score(cfg: &ExperimentConfig) -> Result<RunReport> {
    let mut run = Run::new(cfg, "train-score")?;
    let ckpt = ensure_score(&mut run, &cfg.objective, "")?;
    run.emitted(ckpt);
    run.finish()
}

/// Generates `samples.csv` from the trained score, or from the exact score
/// of the target mixture when `oracle` is set.
pub fn cmd_sample(cfg: &ExperimentConfig, oracle: bool) -> Result<RunReport> {
    let mut run = Run::new(cfg, "sample")?;
    if oracle {
        let job = GenerationJob {
            source: ScoreSource::Oracle(cfg.data.target.clone()),
            sched: cfg.schedule,
            spec: cfg.sampler_spec(),
            n: cfg.sampler.n_samples,
        };
        let (m, prov) = run.stage("generate", |_| sampler::generate(&job))?;
        let out = run.path("oracle_samples.csv");
        let side = sampler::write_samples(&out, &m, &prov)?;
        run.emitted(out);
        run.emitted(side);
    } else {
        let ckpt = ensure_score(&mut run, &cfg.objective, "")?;
        ensure_samples(&mut run, ckpt, "")?;
        let out = run.path("samples.csv");
        run.emitted(out);
    }
    run.finish()
}

/// Evaluates `samples.csv` (regenerating it if stale) into `eval.csv`.
pub fn cmd_eval(cfg: &ExperimentConfig) -> Result<RunReport> {
    let mut run = Run::new(cfg, "eval")?;
    let ckpt = ensure_score(&mut run, &cfg.objective, "")?;
    let samples = ensure_samples(&mut run, ckpt, "")?;
    let reference = reference_samples(cfg)?;
    let row = run.stage("evaluate", |_| eval_row(cfg, cfg.objective.kind.name(), &samples, &reference))?;
    let out = run.path("eval.csv");
    write_eval_rows(&out, std::slice::from_ref(&row), None)?;
    run.emitted(out);
    run.report.metrics.push(row);
    run.finish()
}

/// The ratio-estimation experiment: trains both discriminators and writes
/// the per-time error curve and the integrated-error ratio.
pub fn cmd_repro_fig2(cfg: &ExperimentConfig) -> Result<(RunReport, Fig2Summary)> {
    let mut run = Run::new(cfg, "repro-fig2")?;
    let split = split_of(cfg)?;
    let td = ensure_disc(&mut run, &split, true)?;
    let ti = ensure_disc(&mut run, &split, false)?;
    let oracle = RatioModel::oracle(cfg.data.target.clone(), cfg.data.bias.clone(), cfg.schedule)?;
    let pooled = cfg.data.bias.blend(&cfg.data.target, 0.5)?;
    let n = cfg.eval.dre_grid;
    let grid: Vec<f64> = (0..n)
        .map(|i| cfg.schedule.t_max * i as f64 / (n - 1) as f64)
        .collect();
    let seed = rng::derive_seed(cfg.seeds.disc_seed, "dre-eval");
    let ns = cfg.eval.dre_samples;
    let summary = run.stage("ratio error curve", |_| {
        let integ = ratio::integrated_dre_error(&td, &ti, &oracle, &pooled, &grid, ns, seed)?;
        Ok(Fig2Summary {
            integrated_ratio: integ.ratio,
            mse_t0: ratio::dre_mse(&td, &oracle, &pooled, 0.0, ns, seed)?,
            mse_t04: ratio::dre_mse(&td, &oracle, &pooled, 0.4, ns, seed)?,
            curve: integ.per_t,
        })
    })?;
    let curve = run.path("fig2_dre.csv");
    io::write_table(
        &curve,
        &["t", "mse_time_dep", "mse_time_indep"].map(String::from),
        &summary
            .curve
            .iter()
            .map(|p| {
                vec![
                    p.t.to_string(),
                    p.mse_time_dependent.to_string(),
                    p.mse_time_independent.to_string(),
                ]
            })
            .collect::<Vec<_>>(),
    )?;
    run.emitted(curve);
    let sum = run.path("fig2_summary.csv");
    io::write_table(
        &sum,
        &["integrated_ratio", "mse_t0", "mse_t04", "mse_t0_over_t04"].map(String::from),
        &[vec![
            summary.integrated_ratio.to_string(),
            summary.mse_t0.to_string(),
            summary.mse_t04.to_string(),
            (summary.mse_t0 / summary.mse_t04).to_string(),
        ]],
    )?;
    run.emitted(sum);
    run.report.notes.push(format!(
        "integrated error ratio (time-dependent / time-independent) = {}",
        summary.integrated_ratio
    ));
    Ok((run.finish()?, summary))
}

/// Lattice dump of the time-zero scores, ratio and ratio gradient.
pub fn cmd_repro_fig3(cfg: &ExperimentConfig) -> Result<RunReport> {
    let mut run = Run::new(cfg, "repro-fig3")?;
    let dim = cfg.dim();
    if dim > 2 {
        return Err(Error::Input(format!(
            "vector-field dump supports 1-D and 2-D data, got dimension {dim}"
        )));
    }
    let oracle = RatioModel::oracle(cfg.data.target.clone(), cfg.data.bias.clone(), cfg.schedule)?;
    let res = cfg.eval.field_resolution;
    let ext = cfg.eval.field_extent;
    let axis: Vec<f64> = (0..res)
        .map(|i| if res == 1 { 0.0 } else { -ext + 2.0 * ext * i as f64 / (res - 1) as f64 })
        .collect();
    let points: Vec<Vec<f64>> = if dim == 1 {
        axis.iter().map(|x| vec![*x]).collect()
    } else {
        axis.iter()
            .flat_map(|y| axis.iter().map(move |x| vec![*x, *y]))
            .collect()
    };
    let coord = |p: &'static str| (0..dim).map(move |j| format!("{p}{j}"));
    let mut header: Vec<String> = coord("x").collect();
    header.extend(coord("score_bias_"));
    header.extend(coord("score_data_"));
    header.extend(coord("grad_log_w_"));
    header.push("w".into());
    let rows = run.stage("field", |_| {
        points
            .iter()
            .map(|x| {
                let mut row: Vec<String> = x.iter().map(|v| v.to_string()).collect();
                for v in cfg.data.bias.score(x)?.into_iter().chain(cfg.data.target.score(x)?) {
                    row.push(v.to_string());
                }
                let (lw, g) = oracle.log_ratio_and_grad(x, 0.0)?;
                row.extend(g.iter().map(|v| v.to_string()));
                row.push(lw.exp().to_string());
                Ok(row)
            })
            .collect::<Result<Vec<_>>>()
    })?;
    let out = run.path("fig3_field.csv");
    io::write_table(&out, &header, &rows)?;
    run.emitted(out);
    run.finish()
}

/// The named comparison objectives.
pub fn baselines() -> Vec<(&'static str, ObjectiveSpec)> {
    use crate::objectives::DataStream;
    vec![
        ("dsm_ref", ObjectiveSpec::dsm().with_stream(DataStream::Reference)),
        ("dsm_obs", ObjectiveSpec::dsm()),
        ("iw_dsm", ObjectiveSpec::new(ObjectiveKind::IwDsm)),
        ("tiw_dsm", ObjectiveSpec::tiw_dsm()),
    ]
}

fn train_and_evaluate(
    run: &mut Run<'_>,
    name: &str,
    spec: &ObjectiveSpec,
    dir: &str,
    reference: &Array2<f64>,
) -> Result<EvalRow> {
    let ckpt = ensure_score(run, spec, dir)?;
    let samples = ensure_samples(run, ckpt, dir)?;
    let cfg = run.cfg;
    run.stage(&format!("evaluate {name}"), |_| eval_row(cfg, name, &samples, reference))
}

/// Full pipeline for the configured objective, or for every baseline.
pub fn cmd_debias(cfg: &ExperimentConfig, all_baselines: bool) -> Result<RunReport> {
    let mut run = Run::new(cfg, "debias")?;
    let reference = reference_samples(cfg)?;
    let jobs: Vec<(String, ObjectiveSpec)> = if all_baselines {
        baselines()
            .into_iter()
            .map(|(n, s)| (n.to_string(), s))
            .collect()
    } else {
        vec![(cfg.objective.kind.name().replace('-', "_"), cfg.objective.clone())]
    };
    let mut rows = Vec::new();
    for (name, spec) in &jobs {
        let dir = format!("debias/{name}/");
        rows.push(train_and_evaluate(&mut run, name, spec, &dir, &reference)?);
    }
    let out = run.path("debias.csv");
    write_eval_rows(&out, &rows, None)?;
    run.emitted(out);
    run.report.notes.push(
        "dsm_obs draws uniformly from both splits; ratio-based objectives draw half of each batch from each split"
            .into(),
    );
    run.report.metrics = rows;
    run.finish()
}

/// One `tiw-alpha` model per alpha, evaluated.
pub fn cmd_sweep_alpha(cfg: &ExperimentConfig, alphas: &[f64]) -> Result<RunReport> {
    if let Some(a) = alphas.iter().find(|a| !(**a >= 0.0 && a.is_finite())) {
        return Err(Error::Input(format!("alpha values must be >= 0, got {a}")));
    }
    if alphas.is_empty() {
        return Err(Error::Input("no alpha values given".into()));
    }
    let mut run = Run::new(cfg, "sweep-alpha")?;
    let reference = reference_samples(cfg)?;
    let mut rows = Vec::new();
    for &alpha in alphas {
        let spec = ObjectiveSpec {
            alpha,
            ..ObjectiveSpec::tiw_alpha(alpha)
        };
        let name = format!("alpha_{alpha}");
        let dir = format!("sweep/{name}/");
        rows.push(train_and_evaluate(&mut run, &name, &spec, &dir, &reference)?);
    }
    let out = run.path("sweep_alpha.csv");
    write_eval_rows(&out, &rows, Some(("alpha", alphas)))?;
    run.emitted(out);
    run.report.metrics = rows;
    run.finish()
}
