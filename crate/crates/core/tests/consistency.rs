//! Cross-checks between independent routes to the same quantity.

mod common;

use rand::Rng as _;
use rand_distr::StandardNormal;
use tiwlab::metrics::energy_distance;
use tiwlab::nn::{Activation, Mlp, NetArch, TimeEmbed};
use tiwlab::objectives::{Draw, Objective, ObjectiveKind, ObjectiveSpec, RatioForm};
use tiwlab::ratio::RatioModel;
use tiwlab::{reverse_generate, GaussianMixture, OracleScore, SamplerSpec, VpSchedule};

use common::rel_err;

/// Reweighting at time zero and reweighting along the diffusion are two
/// unbiased estimators of the same expected gradient.
#[test]
fn iw_and_tiw_gradients_agree() {
    let sched = VpSchedule::default();
    let p_bias = GaussianMixture::two_mode(1, 0.1).unwrap();
    let p_data = GaussianMixture::two_mode(1, 0.5).unwrap();
    let rm = RatioModel::oracle(p_data, p_bias.clone(), sched).unwrap();
    let arch = NetArch {
        input_dim: 1,
        output_dim: 1,
        hidden: vec![16],
        activation: Activation::Tanh,
        time_embed: TimeEmbed::AppendScalar,
    };
    let mut net = Mlp::init(arch, 7).unwrap();
    let np = net.num_params();
    net.params_mut()[np - 1] = 5.0;

    let iw = Objective::new(ObjectiveSpec::new(ObjectiveKind::IwDsm).with_form(RatioForm::Direct), sched, Some(&rm)).unwrap();
    let tiw = Objective::new(ObjectiveSpec::tiw_dsm().with_form(RatioForm::Direct), sched, Some(&rm)).unwrap();

    let n = 200_000;
    let x0 = p_bias.sample(n, 1).unwrap();
    let mut rng = tiwlab::rng::rng(2);
    let draws: Vec<Draw> = x0
        .rows()
        .into_iter()
        .map(|r| {
            let mut d = Draw::new(
                r.to_vec(),
                sched.t_eps + (sched.t_max - sched.t_eps) * rng.random::<f64>(),
                vec![rng.sample(StandardNormal)],
            );
            d.x0_weight = iw.origin_weight(&d.x0).unwrap();
            d
        })
        .collect();
    let (_, g_iw) = iw.batch_loss_and_grad(&net, &draws).unwrap();
    let (_, g_tiw) = tiw.batch_loss_and_grad(&net, &draws).unwrap();
    let r = rel_err(&g_iw, &g_tiw);
    assert!(r < 2e-2, "relative gap {r:.3e}");
}

#[test]
fn exact_score_sampler_matches_target() {
    let sched = VpSchedule::default();
    let target = GaussianMixture::two_mode(2, 0.5).unwrap();
    let spec = SamplerSpec { seed: 4, ..Default::default() };
    let samples = reverse_generate(&sched, &OracleScore::new(target.clone(), sched), &spec, 1500).unwrap();
    let reference = target.sample(1500, 9).unwrap();
    let ed = energy_distance(samples.view(), reference.view()).unwrap();
    assert!(ed < 0.01, "energy distance {ed}");
}

#[test]
fn cli_exit_codes_follow_error_category() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = dir.path().join("c.toml");
    std::fs::write(&cfg_path, common::tiny_config(&dir.path().join("out")).to_toml()).unwrap();

    let bad_flag = common::run_cli(&["gen-data", "--no-such-flag"], &cfg_path);
    assert_eq!(bad_flag.status.code(), Some(2));

    let bad_value = common::run_cli(&["gen-data", "--n-ref", "0"], &cfg_path);
    assert_eq!(bad_value.status.code(), Some(3));

    let broken = dir.path().join("broken.toml");
    std::fs::write(&broken, "output_dir = 3\n").unwrap();
    assert_eq!(common::run_cli(&["gen-data"], &broken).status.code(), Some(3));

    let missing = dir.path().join("missing.toml");
    assert_eq!(common::run_cli(&["gen-data"], &missing).status.code(), Some(5));

    let ok = common::run_cli(&["gen-data"], &cfg_path);
    assert!(ok.status.success());
    assert!(dir.path().join("out/bias.csv").exists());
}

#[test]
fn shipped_config_is_the_default_setup() {
    let path = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("configs/fig2.toml");
    let mut cfg = tiwlab::config::ExperimentConfig::load(&path).unwrap();
    assert_eq!(cfg.output_dir, std::path::PathBuf::from("runs/fig2"));
    cfg.output_dir = tiwlab::config::ExperimentConfig::default().output_dir;
    assert_eq!(cfg, tiwlab::config::ExperimentConfig::default());
}
