#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::Command;

use tiwlab::config::ExperimentConfig;

pub fn norm(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

/// `|a - b| / max(|a|, |b|)`, 0 when both vanish.
pub fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let scale = norm(a).max(norm(b));
    if scale == 0.0 {
        0.0
    } else {
        norm(&diff) / scale
    }
}

/// Central-difference gradient of `f` at `x`.
pub fn fd_gradient(x: &[f64], h: f64, mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    let mut p = x.to_vec();
    (0..x.len())
        .map(|i| {
            p[i] = x[i] + h;
            let up = f(&p);
            p[i] = x[i] - h;
            let down = f(&p);
            p[i] = x[i];
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// A config small enough that every CLI command finishes in seconds.
pub fn tiny_config(output_dir: &Path) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::default();
    cfg.output_dir = output_dir.to_path_buf();
    cfg.data.n_bias = 200;
    cfg.data.n_ref = 40;
    for net in [&mut cfg.discriminator, &mut cfg.score] {
        net.hidden = vec![16];
        net.steps = 40;
        net.batch_size = 16;
    }
    cfg.sampler.steps = 10;
    cfg.sampler.n_samples = 64;
    cfg.eval.n_reference = 64;
    cfg.eval.dre_grid = 5;
    cfg.eval.dre_samples = 200;
    cfg.eval.field_resolution = 5;
    cfg.eval.telemetry_every = 10;
    cfg.sweep.alphas = vec![0.0, 1.0];
    cfg
}

pub const ALL_COMMANDS: &[&[&str]] = &[
    &["gen-data"],
    &["train-disc"],
    &["train-disc", "--time-independent"],
    &["train-score"],
    &["sample"],
    &["sample", "--oracle"],
    &["eval"],
    &["repro-fig2"],
    &["repro-fig3"],
    &["debias", "--all-baselines"],
    &["sweep-alpha"],
];

pub fn run_cli(args: &[&str], config: &Path) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_tiwlab"))
        .args(args)
        .arg("--config")
        .arg(config)
        .output()
        .expect("spawn tiwlab")
}

/// Runs every subcommand against `tiny_config` rooted at `root` and returns
/// the bytes of every CSV produced, keyed by path relative to the output dir.
pub fn run_all_commands(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let out = root.join("out");
    let cfg_path = root.join("config.toml");
    std::fs::write(&cfg_path, tiny_config(&out).to_toml()).unwrap();
    for args in ALL_COMMANDS {
        let o = run_cli(args, &cfg_path);
        assert!(
            o.status.success(),
            "tiwlab {args:?} failed: {}",
            String::from_utf8_lossy(&o.stderr)
        );
    }
    let mut files = BTreeMap::new();
    collect_csv(&out, &out, &mut files);
    files
}

fn collect_csv(base: &Path, dir: &Path, acc: &mut BTreeMap<PathBuf, Vec<u8>>) {
    for entry in std::fs::read_dir(dir).unwrap() {
        let p = entry.unwrap().path();
        if p.is_dir() {
            collect_csv(base, &p, acc);
        } else if p.extension().is_some_and(|e| e == "csv") {
            acc.insert(p.strip_prefix(base).unwrap().to_path_buf(), std::fs::read(&p).unwrap());
        }
    }
}
