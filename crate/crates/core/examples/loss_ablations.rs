//! Trains 1-D score models with only the weight or only the correction term,
//! using the exact ratio. Weighting alone leaves the pointwise optimum at
//! the biased score; the correction alone moves it to the target score.
//!
//! Pass a number of training steps to override the default of 3000.

use tiwlab::nn::{AdamConfig, NetArch};
use tiwlab::objectives::{train_score, Objective, ObjectiveKind, ObjectiveSpec, RatioForm};
use tiwlab::ratio::{DatasetSplit, RatioModel};
use tiwlab::training::{LrSchedule, TrainConfig};
use tiwlab::{GaussianMixture, ScoreFn, VpSchedule};

fn main() -> tiwlab::Result<()> {
    let steps = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(3000);
    let sched = VpSchedule::default();
    let biased = GaussianMixture::two_mode(1, 0.1)?;
    let target = GaussianMixture::two_mode(1, 0.5)?;
    let ratio = RatioModel::oracle(target.clone(), biased.clone(), sched)?;
    let split = DatasetSplit::generate(&biased, &target, 20_000, 100, 0)?;
    let cfg = TrainConfig {
        arch: NetArch::toy(1, 1),
        steps,
        batch_size: 256,
        adam: AdamConfig::default(),
        lr_schedule: LrSchedule::Cosine,
        seed: 3,
    };

    println!("kind              t    mse to biased   mse to target");
    for kind in [ObjectiveKind::WeightOnly, ObjectiveKind::CorrectionOnly, ObjectiveKind::TiwDsm] {
        let spec = ObjectiveSpec::new(kind).with_form(RatioForm::Direct);
        let objective = Objective::new(spec, sched, Some(&ratio))?;
        let (net, _) = train_score(&split, &objective, &cfg, 0)?;
        for t in [0.1, 0.5] {
            let (pb, pt) = (biased.perturb(&sched, t)?, target.perturb(&sched, t)?);
            let (lo, hi) = pt.bounding_box(2.0);
            let (mut to_b, mut to_t) = (0.0, 0.0);
            for i in 0..=40 {
                let x = [lo + (hi - lo) * i as f64 / 40.0];
                let s = net.score(&x, t)[0];
                to_b += (s - pb.score(&x)?[0]).powi(2) / 41.0;
                to_t += (s - pt.score(&x)?[0]).powi(2) / 41.0;
            }
            println!("{:16} {t:4} {to_b:14.4} {to_t:15.4}", kind.name());
        }
    }
    Ok(())
}
