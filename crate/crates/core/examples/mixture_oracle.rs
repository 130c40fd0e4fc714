//! Closed-form quantities of a Gaussian mixture and its diffused marginals:
//! densities, posteriors, scores and the exact density ratio between a
//! biased and an unbiased mixture as diffusion time grows.

use tiwlab::{true_ratio, GaussianMixture, VpSchedule};

fn main() -> tiwlab::Result<()> {
    let sched = VpSchedule::default();
    let biased = GaussianMixture::two_mode(2, 0.1)?;
    let target = GaussianMixture::two_mode(2, 0.5)?;

    let x = [1.5, 2.5];
    println!("x = {x:?}");
    println!("  biased density  {:.5e}", biased.density(&x)?);
    println!("  posterior       {:?}", biased.posterior(&x)?);
    println!("  score           {:?}", biased.score(&x)?);

    println!("\n   t   alpha   sigma   w(x) = p_target / p_biased");
    for t in [0.0, 0.1, 0.25, 0.5, 1.0] {
        let (a, s) = sched.alpha_sigma(t)?;
        let w = true_ratio(&target.perturb(&sched, t)?, &biased.perturb(&sched, t)?, &x)?;
        println!("{t:5.2} {a:7.4} {s:7.4} {w:10.4}");
    }
    let (mean, var) = target.perturb(&sched, 0.5)?.moments();
    println!("\ntarget at t = 0.5: mean {mean:?}, variance {var:?}");
    Ok(())
}
