//! The correction term in isolation: along a line through both modes, the
//! biased score plus grad log w reproduces the target score exactly, and
//! the tempered version interpolates between the two.

use tiwlab::ratio::RatioModel;
use tiwlab::{GaussianMixture, VpSchedule};

fn main() -> tiwlab::Result<()> {
    let sched = VpSchedule::default();
    let biased = GaussianMixture::two_mode(2, 0.1)?;
    let target = GaussianMixture::two_mode(2, 0.5)?;
    let ratio = RatioModel::oracle(target.clone(), biased.clone(), sched)?;

    for t in [0.05, 0.3] {
        let (pb, pt) = (biased.perturb(&sched, t)?, target.perturb(&sched, t)?);
        println!("t = {t}");
        println!("     x     biased   +grad log w   target   alpha=0.5 correction");
        for i in -4..=4 {
            let x = [i as f64, i as f64];
            let sb = pb.score(&x)?[0];
            let g = ratio.grad_log_w(&x, t)?[0];
            let half = ratio.grad_log_tilde(&x, t, 0.5)?[0];
            println!("{:6.1} {sb:9.4} {:12.4} {:9.4} {half:12.4}", x[0], sb + g, pt.score(&x)?[0]);
        }
    }
    Ok(())
}
