use proptest::prelude::*;
use tiwlab::config::ExperimentConfig;
use tiwlab::metrics::{energy_distance, mode_proportions};
use tiwlab::nn::{Activation, Checkpoint, Mlp, NetArch, TimeEmbed};
use tiwlab::objectives::{persample_dsm, persample_iw_dsm, persample_tiw_dsm, LambdaKind};
use tiwlab::ratio::{RatioModel, LOGIT_CLAMP};
use tiwlab::{reverse_generate, GaussianMixture, OracleScore, SamplerSpec, VpSchedule};

fn small_arch(input_dim: usize, output_dim: usize) -> NetArch {
    NetArch {
        input_dim,
        output_dim,
        hidden: vec![6],
        activation: Activation::Silu,
        time_embed: TimeEmbed::Sinusoidal { frequencies: 2 },
    }
}

fn mixtures() -> (GaussianMixture, GaussianMixture) {
    (
        GaussianMixture::two_mode(2, 0.1).unwrap(),
        GaussianMixture::two_mode(2, 0.5).unwrap(),
    )
}

fn point() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-6.0..6.0f64, 2)
}

fn time() -> impl Strategy<Value = f64> {
    1e-3..1.0f64
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn schedule_is_variance_preserving(t in 0.0..1.0f64) {
        let sched = VpSchedule::default();
        let (a, s) = sched.alpha_sigma(t).unwrap();
        prop_assert!((a * a + s * s - 1.0).abs() < 1e-12);
        prop_assert!((s * s - sched.sigma_squared(t)).abs() < 1e-12);
        let (a2, _) = sched.alpha_sigma((t + 0.01).min(1.0)).unwrap();
        prop_assert!(a2 <= a);
    }

    #[test]
    fn posterior_is_a_distribution(x in point(), minority in 0.01..0.99f64) {
        let gm = GaussianMixture::two_mode(2, minority).unwrap();
        let post = gm.posterior(&x).unwrap();
        prop_assert!(post.iter().all(|p| (0.0..=1.0).contains(p)));
        prop_assert!((post.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn oracle_log_ratio_is_antisymmetric(x in point(), t in time()) {
        let sched = VpSchedule::default();
        let (b, d) = mixtures();
        let fwd = RatioModel::oracle(d.clone(), b.clone(), sched).unwrap();
        let bwd = RatioModel::oracle(b, d, sched).unwrap();
        let (l1, l2) = (fwd.log_ratio(&x, t).unwrap(), bwd.log_ratio(&x, t).unwrap());
        if l1.abs() < LOGIT_CLAMP - 1e-9 {
            prop_assert!((l1 + l2).abs() < 1e-9);
        }
    }

    #[test]
    fn weights_stay_bounded(x in point(), t in time(), alpha in 0.0..1.0f64, seed in 0u64..1000) {
        let sched = VpSchedule::default();
        let rm = RatioModel::learned(Mlp::init(small_arch(2, 1), seed).unwrap(), sched, true).unwrap();
        let w = rm.ratio_w(&x, t).unwrap();
        prop_assert!((1e-3 * (1.0 - 1e-12)..=1e3 * (1.0 + 1e-12)).contains(&w));
        let tilde = rm.ratio_tilde_alpha(&x, t, alpha).unwrap();
        prop_assert!(tilde > 0.0 && tilde < 2.0);
        prop_assert_eq!(rm.ratio_tilde_alpha(&x, t, 0.0).unwrap().to_bits(), 1.0f64.to_bits());
        prop_assert!(rm.grad_log_tilde(&x, t, 0.0).unwrap().iter().all(|g| *g == 0.0));
    }

    #[test]
    fn zero_exponent_reduces_to_dsm(
        x0 in point(), noise in point(), t in time(), seed in 0u64..1000
    ) {
        let sched = VpSchedule::default();
        let (b, d) = mixtures();
        let rm = RatioModel::oracle(d, b.clone(), sched).unwrap();
        let unit = RatioModel::unit(b, sched);
        let net = Mlp::init(small_arch(2, 2), seed).unwrap();
        let dsm = persample_dsm(&net, &x0, t, &noise, &sched, LambdaKind::SigmaSquared).unwrap();
        let tiw0 = persample_tiw_dsm(&net, &x0, t, &noise, &sched, &rm, LambdaKind::SigmaSquared, 0.0).unwrap();
        let unit1 = persample_tiw_dsm(&net, &x0, t, &noise, &sched, &unit, LambdaKind::SigmaSquared, 1.0).unwrap();
        prop_assert!(dsm >= 0.0);
        prop_assert_eq!(tiw0.to_bits(), dsm.to_bits());
        prop_assert_eq!(unit1.to_bits(), dsm.to_bits());
    }

    #[test]
    fn importance_weight_scales_the_loss(
        x0 in point(), noise in point(), t in time(), w in 0.0..50.0f64
    ) {
        let sched = VpSchedule::default();
        let net = Mlp::init(small_arch(2, 2), 3).unwrap();
        let dsm = persample_dsm(&net, &x0, t, &noise, &sched, LambdaKind::Uniform).unwrap();
        let iw = persample_iw_dsm(&net, w, &x0, t, &noise, &sched, LambdaKind::Uniform).unwrap();
        prop_assert_eq!(iw.to_bits(), (w * dsm).to_bits());
    }

    #[test]
    fn energy_distance_is_symmetric(
        a in prop::collection::vec(-5.0..5.0f64, 4..40),
        b in prop::collection::vec(-5.0..5.0f64, 4..40),
    ) {
        let a = ndarray::Array2::from_shape_vec((a.len() / 2, 2), a[..a.len() / 2 * 2].to_vec()).unwrap();
        let b = ndarray::Array2::from_shape_vec((b.len() / 2, 2), b[..b.len() / 2 * 2].to_vec()).unwrap();
        let ab = energy_distance(a.view(), b.view()).unwrap();
        let ba = energy_distance(b.view(), a.view()).unwrap();
        prop_assert!((ab - ba).abs() <= 1e-12 * ab.abs().max(1.0));
        prop_assert_eq!(energy_distance(a.view(), a.view()).unwrap(), 0.0);
    }

    #[test]
    fn proportions_sum_to_one(xs in prop::collection::vec(-6.0..6.0f64, 2..60)) {
        let m = ndarray::Array2::from_shape_vec((xs.len() / 2, 2), xs[..xs.len() / 2 * 2].to_vec()).unwrap();
        let p = mode_proportions(m.view(), &mixtures().1).unwrap();
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn checkpoints_round_trip(seed in 0u64..10_000, hidden in 1usize..12) {
        let arch = NetArch { hidden: vec![hidden, 3], ..small_arch(2, 2) };
        let net = Mlp::init(arch, seed).unwrap();
        let ck = Checkpoint::new("score", net.clone()).with_field("k", "v");
        let back = Checkpoint::from_bytes(&ck.to_bytes()).unwrap();
        prop_assert_eq!(back.net.params(), net.params());
        prop_assert_eq!(back.field("k"), Some("v"));
    }

    #[test]
    fn config_round_trips_and_hashes(base in 0u64..1_000_000, n_bias in 2usize..5000, n_ref in 2usize..500) {
        let mut cfg = ExperimentConfig::default();
        cfg.seeds = tiwlab::config::Seeds::from_base(base);
        cfg.data.n_bias = n_bias;
        cfg.data.n_ref = n_ref;
        let back = ExperimentConfig::from_toml(&cfg.to_toml()).unwrap();
        prop_assert_eq!(&back, &cfg);
        prop_assert_eq!(back.hash(), cfg.hash());
        let mut other = cfg.clone();
        other.seeds.sample_seed = other.seeds.sample_seed.wrapping_add(1);
        prop_assert_ne!(other.hash(), cfg.hash());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn trajectories_do_not_depend_on_batch_size(seed in 0u64..1000, n in 2usize..6) {
        let sched = VpSchedule::default();
        let score = OracleScore::new(mixtures().1, sched);
        let spec = SamplerSpec { steps: 8, seed, ..Default::default() };
        let few = reverse_generate(&sched, &score, &spec, n).unwrap();
        let more = reverse_generate(&sched, &score, &spec, n + 3).unwrap();
        prop_assert_eq!(few.view(), more.slice(ndarray::s![..n, ..]));
    }
}
