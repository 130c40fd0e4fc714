//! Monte-Carlo gradient of the reweighted denoising loss on the biased
//! stream against the quadrature gradient of exact score matching on the
//! target. The two agree up to sampling noise, which stratified draws cut.

use rand::seq::SliceRandom;
use rand::Rng as _;
use statrs::distribution::{ContinuousCDF, Normal};
use tiwlab::nn::{Activation, Mlp, NetArch, TimeEmbed};
use tiwlab::objectives::{loss_sm_oracle, Draw, LambdaKind, Objective, ObjectiveSpec, QuadratureGrid};
use tiwlab::ratio::RatioModel;
use tiwlab::{GaussianMixture, VpSchedule};

fn latin(n: usize, rng: &mut tiwlab::rng::Rng) -> Vec<f64> {
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(rng);
    perm.iter().map(|&k| (k as f64 + rng.random::<f64>()) / n as f64).collect()
}

fn main() -> tiwlab::Result<()> {
    let sched = VpSchedule::default();
    let biased = GaussianMixture::two_mode(1, 0.1)?;
    let target = GaussianMixture::two_mode(1, 0.5)?;
    let ratio = RatioModel::oracle(target.clone(), biased.clone(), sched)?;
    let arch = NetArch {
        input_dim: 1,
        output_dim: 1,
        hidden: vec![16],
        activation: Activation::Tanh,
        time_embed: TimeEmbed::AppendScalar,
    };
    let mut net = Mlp::init(arch, 7)?;
    let last = net.num_params() - 1;
    net.params_mut()[last] = 5.0;

    let exact = loss_sm_oracle(&net, QuadratureGrid::default(), &sched, &target, LambdaKind::SigmaSquared)?;
    let norm = exact.grad.iter().map(|g| g * g).sum::<f64>().sqrt();
    println!("quadrature loss {:.6}, |grad| {norm:.4}", exact.value);

    let objective = Objective::new(ObjectiveSpec::tiw_dsm(), sched, Some(&ratio))?;
    let normal = Normal::standard();
    for n in [1_000, 10_000, 100_000] {
        let mut rng = tiwlab::rng::rng(0);
        let (ut, ux, ue) = (latin(n, &mut rng), latin(n, &mut rng), latin(n, &mut rng));
        // Pooled stream: 0.7 of the mass at -2, 0.3 at +2.
        let n_minus = (0.7 * n as f64).round() as usize;
        let draws: Vec<Draw> = (0..n)
            .map(|i| {
                let mean = if i < n_minus { -2.0 } else { 2.0 };
                Draw::new(
                    vec![mean + normal.inverse_cdf(ux[i])],
                    sched.t_eps + (sched.t_max - sched.t_eps) * ut[i],
                    vec![normal.inverse_cdf(ue[i])],
                )
            })
            .collect();
        let (_, g) = objective.batch_loss_and_grad(&net, &draws)?;
        let gap = g
            .iter()
            .zip(&exact.grad)
            .map(|(a, b)| (a * (sched.t_max - sched.t_eps) - b).powi(2))
            .sum::<f64>()
            .sqrt();
        println!("n = {n:6}: relative gap {:.2e}", gap / norm);
    }
    Ok(())
}
