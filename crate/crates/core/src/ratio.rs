//! Time-dependent density ratios `w^t(x) = p_data^t(x) / p_bias^t(x)`.
//!
//! A [`RatioModel`] is either a trained discriminator whose raw logit `h`
//! gives `log w = h` (since `d = sigmoid(h)` and `w = d / (1 - d)`), or the
//! analytic ratio of two perturbed mixtures. All derived quantities (`w`,
//! `w~ = 2d`, the alpha-scaled `w~`, and their log-gradients) are computed
//! from the log-ratio so the two kinds share one code path.

use ndarray::Array2;
use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::mixture::{log_true_ratio, GaussianMixture};
use crate::nn::{adam_step_with_lr, Checkpoint, Mlp, OptimState};
use crate::rng;
use crate::sde::VpSchedule;
use crate::training::TrainConfig;

/// Learned logits are clamped to `±ln 1000` before exponentiation.
pub const LOGIT_CLAMP: f64 = 6.907_755_278_982_137;

pub const ROLE_DISCRIMINATOR: &str = "discriminator";

/// Weakly supervised observations: only the origin of each row is known.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSplit {
    pub bias: Array2<f64>,
    pub reference: Array2<f64>,
}

impl DatasetSplit {
    pub fn new(bias: Array2<f64>, reference: Array2<f64>) -> Result<Self> {
        check_dim(bias.ncols(), reference.ncols())?;
        if bias.ncols() == 0 {
            return Err(Error::Input("dataset dimension must be positive".into()));
        }
        Ok(Self { bias, reference })
    }

    /// Draws `n_bias` rows from `p_bias` and `n_ref` rows from `p_data`.
    pub fn generate(
        p_bias: &GaussianMixture,
        p_data: &GaussianMixture,
        n_bias: usize,
        n_ref: usize,
        seed: u64,
    ) -> Result<Self> {
        check_dim(p_bias.dim(), p_data.dim())?;
        if n_bias == 0 || n_ref == 0 {
            return Err(Error::Input(format!(
                "both splits must be non-empty (got |D_bias| = {n_bias}, |D_ref| = {n_ref})"
            )));
        }
        let bias = p_bias.sample(n_bias, rng::derive_seed(seed, "bias"))?;
        let reference = p_data.sample(n_ref, rng::derive_seed(seed, "ref"))?;
        Self::new(bias, reference)
    }

    pub fn dim(&self) -> usize {
        self.bias.ncols()
    }

    pub fn require_both(&self) -> Result<()> {
        if self.bias.nrows() == 0 || self.reference.nrows() == 0 {
            return Err(Error::Input(
                "discriminator training needs non-empty bias and reference splits".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum RatioKind {
    /// Discriminator logit network. A time-independent model is queried at
    /// `t = 0` whatever time is asked for.
    Learned { net: Mlp, time_dependent: bool },
    /// `p_num^t / p_den^t` in closed form.
    Oracle {
        num: GaussianMixture,
        den: GaussianMixture,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct RatioModel {
    pub sched: VpSchedule,
    pub kind: RatioKind,
}

/// `(weight, grad log weight)` at one point.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightTerms {
    pub weight: f64,
    pub grad_log: Vec<f64>,
}

pub(crate) fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `log(1 + e^z)` without overflow.
fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

impl RatioModel {
    pub fn learned(net: Mlp, sched: VpSchedule, time_dependent: bool) -> Result<Self> {
        if net.output_dim() != 1 {
            return Err(Error::Input(format!(
                "discriminator must have one logit output, got {}",
                net.output_dim()
            )));
        }
        Ok(Self {
            sched,
            kind: RatioKind::Learned {
                net,
                time_dependent,
            },
        })
    }

    pub fn oracle(num: GaussianMixture, den: GaussianMixture, sched: VpSchedule) -> Result<Self> {
        check_dim(num.dim(), den.dim())?;
        Ok(Self {
            sched,
            kind: RatioKind::Oracle { num, den },
        })
    }

    /// Oracle ratio `1` everywhere.
    pub fn unit(gm: GaussianMixture, sched: VpSchedule) -> Self {
        Self {
            sched,
            kind: RatioKind::Oracle {
                num: gm.clone(),
                den: gm,
            },
        }
    }

    pub fn dim(&self) -> usize {
        match &self.kind {
            RatioKind::Learned { net, .. } => net.input_dim(),
            RatioKind::Oracle { num, .. } => num.dim(),
        }
    }

    fn check(&self, x: &[f64], t: f64) -> Result<()> {
        check_dim(self.dim(), x.len())?;
        if !(0.0..=self.sched.t_max).contains(&t) {
            return Err(Error::TimeRange {
                t,
                lo: 0.0,
                hi: self.sched.t_max,
            });
        }
        Ok(())
    }

    /// `log w` and its gradient in `x`. Learned logits are clamped; the
    /// gradient is zero where the clamp is active.
    pub fn log_ratio_and_grad(&self, x: &[f64], t: f64) -> Result<(f64, Vec<f64>)> {
        self.check(x, t)?;
        match &self.kind {
            RatioKind::Learned {
                net,
                time_dependent,
            } => {
                let tq = if *time_dependent { t } else { 0.0 };
                let cache = net.forward_cached(x, tq)?;
                let h = cache.output()[0];
                if h.abs() < LOGIT_CLAMP {
                    Ok((h, net.input_vjp(&cache, &[1.0])?))
                } else {
                    Ok((h.clamp(-LOGIT_CLAMP, LOGIT_CLAMP), vec![0.0; x.len()]))
                }
            }
            RatioKind::Oracle { num, den } => {
                let (a, s) = self.sched.alpha_sigma(t)?;
                let (num, den) = (num.scaled(a, s), den.scaled(a, s));
                let lr = log_true_ratio(&num, &den, x)?;
                let g = num
                    .score(x)?
                    .into_iter()
                    .zip(den.score(x)?)
                    .map(|(p, q)| p - q)
                    .collect();
                Ok((lr, g))
            }
        }
    }

    /// `log w`, clamped for learned models.
    pub fn log_ratio(&self, x: &[f64], t: f64) -> Result<f64> {
        self.check(x, t)?;
        match &self.kind {
            RatioKind::Learned {
                net,
                time_dependent,
            } => {
                let tq = if *time_dependent { t } else { 0.0 };
                Ok(net.forward(x, tq)?[0].clamp(-LOGIT_CLAMP, LOGIT_CLAMP))
            }
            RatioKind::Oracle { num, den } => {
                let (a, s) = self.sched.alpha_sigma(t)?;
                log_true_ratio(&num.scaled(a, s), &den.scaled(a, s), x)
            }
        }
    }

    /// Unclamped discriminator logit (learned kind) or the exact log ratio.
    pub fn logit(&self, x: &[f64], t: f64) -> Result<f64> {
        match &self.kind {
            RatioKind::Learned {
                net,
                time_dependent,
            } => {
                self.check(x, t)?;
                let tq = if *time_dependent { t } else { 0.0 };
                Ok(net.forward(x, tq)?[0])
            }
            RatioKind::Oracle { .. } => self.log_ratio(x, t),
        }
    }

    pub fn ratio_w(&self, x: &[f64], t: f64) -> Result<f64> {
        Ok(self.log_ratio(x, t)?.exp())
    }

    /// `w~ = p_data / (p_bias/2 + p_data/2) = 2w/(1+w) = 2d`.
    pub fn ratio_tilde(&self, x: &[f64], t: f64) -> Result<f64> {
        self.ratio_tilde_alpha(x, t, 1.0)
    }

    /// `2 w^alpha / (1 + w^alpha)`.
    pub fn ratio_tilde_alpha(&self, x: &[f64], t: f64, alpha: f64) -> Result<f64> {
        check_alpha(alpha)?;
        Ok(2.0 * sigmoid(alpha * self.log_ratio(x, t)?))
    }

    pub fn grad_log_w(&self, x: &[f64], t: f64) -> Result<Vec<f64>> {
        Ok(self.log_ratio_and_grad(x, t)?.1)
    }

    /// `grad log w~(x, alpha) = alpha (1 - sigmoid(alpha log w)) grad log w`.
    pub fn grad_log_tilde(&self, x: &[f64], t: f64, alpha: f64) -> Result<Vec<f64>> {
        Ok(self.tilde_terms(x, t, alpha)?.grad_log)
    }

    /// Weight `w~(x, alpha)` and correction `grad log w~(x, alpha)` from one
    /// evaluation.
    pub fn tilde_terms(&self, x: &[f64], t: f64, alpha: f64) -> Result<WeightTerms> {
        check_alpha(alpha)?;
        let (lr, g) = self.log_ratio_and_grad(x, t)?;
        let d = sigmoid(alpha * lr);
        let k = alpha * (1.0 - d);
        Ok(WeightTerms {
            weight: 2.0 * d,
            grad_log: g.into_iter().map(|v| k * v).collect(),
        })
    }

    /// Weight `w^alpha` and correction `alpha grad log w` for objectives
    /// written directly against `p_bias`.
    pub fn direct_terms(&self, x: &[f64], t: f64, alpha: f64) -> Result<WeightTerms> {
        check_alpha(alpha)?;
        let (lr, g) = self.log_ratio_and_grad(x, t)?;
        Ok(WeightTerms {
            weight: (alpha * lr).exp(),
            grad_log: g.into_iter().map(|v| alpha * v).collect(),
        })
    }

    pub fn to_checkpoint(&self) -> Option<Checkpoint> {
        match &self.kind {
            RatioKind::Learned {
                net,
                time_dependent,
            } => Some(
                Checkpoint::new(ROLE_DISCRIMINATOR, net.clone())
                    .with_field("time_dependent", time_dependent.to_string()),
            ),
            RatioKind::Oracle { .. } => None,
        }
    }

    pub fn from_checkpoint(ck: Checkpoint, sched: VpSchedule) -> Result<Self> {
        if ck.role != ROLE_DISCRIMINATOR {
            return Err(Error::format(
                "role",
                format!("expected `{ROLE_DISCRIMINATOR}`, found `{}`", ck.role),
            ));
        }
        let time_dependent = match ck.field("time_dependent") {
            None | Some("true") => true,
            Some("false") => false,
            Some(other) => return Err(Error::format("time_dependent", format!("bad value `{other}`"))),
        };
        Self::learned(ck.net, sched, time_dependent)
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha >= 0.0 && alpha.is_finite() {
        Ok(())
    } else {
        Err(Error::Input(format!("alpha must be >= 0, got {alpha}")))
    }
}

/// Summary of a discriminator run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscReport {
    /// Mean T-BCE over the last tenth of training.
    pub final_tbce: f64,
    /// T-BCE on fresh times and noise over the training rows.
    pub heldout_tbce: f64,
    pub steps: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiscConfig {
    pub train: TrainConfig,
    /// When false, every batch is drawn at `t = 0` and the model is queried
    /// at `t = 0` for any time.
    pub time_dependent: bool,
}

/// Trains `d(x, t) = sigmoid(h(x, t))` with the time-weighted binary
/// cross-entropy: each step takes half a batch from the reference split
/// (label 1) and half from the bias split (label 0), draws `t ~ U[t_eps, T]`
/// per row, diffuses with the VP kernel and takes one Adam step. The time
/// weight is uniform.
pub fn train_discriminator(
    split: &DatasetSplit,
    sched: &VpSchedule,
    cfg: &DiscConfig,
) -> Result<(RatioModel, DiscReport)> {
    split.require_both()?;
    sched.validate()?;
    let tc = &cfg.train;
    tc.validate()?;
    check_dim(split.dim(), tc.arch.input_dim)?;
    if tc.arch.output_dim != 1 {
        return Err(Error::Input("discriminator output_dim must be 1".into()));
    }

    let mut net = Mlp::init(tc.arch.clone(), rng::derive_seed(tc.seed, "disc-init"))?;
    let mut opt = OptimState::new(net.num_params(), tc.adam);
    let mut rng = rng::rng(rng::derive_seed(tc.seed, "disc-batches"));
    let dim = split.dim();
    let half = tc.batch_size / 2;
    let mut grad = vec![0.0; net.num_params()];
    let mut noise = vec![0.0; dim];
    let mut xt = vec![0.0; dim];
    let tail_start = tc.steps - (tc.steps / 10).max(1);
    let mut tail = (0.0, 0usize);

    for step in 0..tc.steps {
        grad.fill(0.0);
        let mut loss = 0.0;
        for i in 0..tc.batch_size {
            let (rows, label) = if i < half {
                (&split.reference, 1.0)
            } else {
                (&split.bias, 0.0)
            };
            let row = rows.row(rng.random_range(0..rows.nrows()));
            let t = if cfg.time_dependent {
                rng.random_range(sched.t_eps..sched.t_max)
            } else {
                0.0
            };
            for e in noise.iter_mut() {
                *e = rng.sample(StandardNormal);
            }
            let (a, s) = sched.alpha_sigma_unchecked(t);
            for ((o, x), e) in xt.iter_mut().zip(row.iter()).zip(&noise) {
                *o = a * x + s * e;
            }
            let cache = net.forward_cached(&xt, t)?;
            let h = cache.output()[0];
            loss += if label == 1.0 { softplus(-h) } else { softplus(h) };
            let dh = (sigmoid(h) - label) / tc.batch_size as f64;
            net.accumulate_param_gradient(&cache, &[dh], &mut grad)?;
        }
        loss /= tc.batch_size as f64;
        if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::Numerical {
                step,
                t: f64::NAN,
                detail: "non-finite discriminator loss".into(),
            });
        }
        if step >= tail_start {
            tail.0 += loss;
            tail.1 += 1;
        }
        let lr = tc.learning_rate(step);
        adam_step_with_lr(net.params_mut(), &grad, &mut opt, lr)?;
    }

    let model = RatioModel::learned(net, *sched, cfg.time_dependent)?;
    let heldout_tbce = tbce(
        &model,
        split,
        sched,
        cfg.time_dependent,
        4096,
        rng::derive_seed(tc.seed, "disc-heldout"),
    )?;
    let report = DiscReport {
        final_tbce: tail.0 / tail.1.max(1) as f64,
        heldout_tbce,
        steps: tc.steps,
    };
    Ok((model, report))
}

/// Monte-Carlo T-BCE of `model` on balanced draws from `split`.
pub fn tbce(
    model: &RatioModel,
    split: &DatasetSplit,
    sched: &VpSchedule,
    time_dependent: bool,
    n: usize,
    seed: u64,
) -> Result<f64> {
    let mut rng = rng::rng(seed);
    let dim = split.dim();
    let mut total = 0.0;
    let mut xt = vec![0.0; dim];
    for i in 0..n {
        let (rows, label) = if i % 2 == 0 {
            (&split.reference, true)
        } else {
            (&split.bias, false)
        };
        let row = rows.row(rng.random_range(0..rows.nrows()));
        let t = if time_dependent {
            rng.random_range(sched.t_eps..sched.t_max)
        } else {
            0.0
        };
        let (a, s) = sched.alpha_sigma_unchecked(t);
        for (o, x) in xt.iter_mut().zip(row.iter()) {
            let e: f64 = rng.sample(StandardNormal);
            *o = a * x + s * e;
        }
        let h = model.logit(&xt, t)?;
        total += if label { softplus(-h) } else { softplus(h) };
    }
    Ok(total / n as f64)
}

/// `E ||w*^t - w^t||^2` under `pooled^t`, the time-`t` pushforward of the
/// time-0 evaluation mixture (normally `p_bias/2 + p_data/2`).
pub fn dre_mse(
    model: &RatioModel,
    oracle: &RatioModel,
    pooled: &GaussianMixture,
    t: f64,
    n: usize,
    seed: u64,
) -> Result<f64> {
    if n == 0 {
        return Err(Error::Input("dre_mse needs n >= 1".into()));
    }
    let eval = pooled.perturb(&oracle.sched, t)?;
    let xs = eval.sample(n, seed)?;
    let mut acc = 0.0;
    for row in xs.rows() {
        let x = row.as_slice().expect("standard layout");
        let d = oracle.ratio_w(x, t)? - model.ratio_w(x, t)?;
        acc += d * d;
    }
    Ok(acc / n as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DrePoint {
    pub t: f64,
    pub mse_time_dependent: f64,
    pub mse_time_independent: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntegratedDre {
    /// Time-dependent integral divided by the time-independent integral.
    pub ratio: f64,
    pub per_t: Vec<DrePoint>,
}

/// Trapezoid-rule integrals of the ratio-estimation error over `grid`.
///
/// The time-dependent model is scored against `w*^t` at each grid time. The
/// time-independent model reweights by `w(x_0)` at every diffusion time, so
/// its error at every `t` is its `t = 0` error. When both integrals are below
/// `1e-12` the ratio is defined as 1.
pub fn integrated_dre_error(
    time_dependent: &RatioModel,
    time_independent: &RatioModel,
    oracle: &RatioModel,
    pooled: &GaussianMixture,
    grid: &[f64],
    n: usize,
    seed: u64,
) -> Result<IntegratedDre> {
    if grid.len() < 2 || grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Input(
            "time grid needs at least two strictly increasing points".into(),
        ));
    }
    let mse_ti = dre_mse(time_independent, oracle, pooled, 0.0, n, seed)?;
    let per_t = grid
        .iter()
        .map(|&t| {
            Ok(DrePoint {
                t,
                mse_time_dependent: dre_mse(time_dependent, oracle, pooled, t, n, seed)?,
                mse_time_independent: mse_ti,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let trap = |f: &dyn Fn(&DrePoint) -> f64| -> f64 {
        per_t
            .windows(2)
            .map(|w| 0.5 * (w[1].t - w[0].t) * (f(&w[0]) + f(&w[1])))
            .sum()
    };
    let num = trap(&|p| p.mse_time_dependent);
    let den = trap(&|p| p.mse_time_independent);
    let ratio = if num < 1e-12 && den < 1e-12 {
        1.0
    } else if den < 1e-12 {
        return Err(Error::Degenerate(
            "time-independent integrated error is zero".into(),
        ));
    } else {
        num / den
    };
    Ok(IntegratedDre { ratio, per_t })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{Activation, NetArch, TimeEmbed};
    use approx::assert_relative_eq;

    fn fig_oracle() -> RatioModel {
        RatioModel::oracle(
            GaussianMixture::two_mode(2, 0.5).unwrap(),
            GaussianMixture::two_mode(2, 0.1).unwrap(),
            VpSchedule::default(),
        )
        .unwrap()
    }

    /// A one-layer logit net `h(x, t) = c . x + b` with chosen weights.
    fn linear_disc(c: [f64; 2], b: f64) -> RatioModel {
        let arch = NetArch {
            input_dim: 2,
            output_dim: 1,
            hidden: vec![],
            activation: Activation::Tanh,
            time_embed: TimeEmbed::AppendScalar,
        };
        let net = Mlp::from_params(arch, vec![c[0], c[1], 0.0, b]).unwrap();
        RatioModel::learned(net, VpSchedule::default(), true).unwrap()
    }

    #[test]
    fn zero_logit_means_unit_ratio() {
        let m = linear_disc([0.0, 0.0], 0.0);
        assert_eq!(m.ratio_w(&[0.3, 0.1], 0.5).unwrap(), 1.0);
        assert_eq!(m.ratio_tilde(&[0.3, 0.1], 0.5).unwrap(), 1.0);
    }

    #[test]
    fn oracle_ratio_values() {
        let unit = RatioModel::unit(GaussianMixture::two_mode(2, 0.1).unwrap(), VpSchedule::default());
        for t in [0.0, 0.3, 1.0] {
            assert_eq!(unit.ratio_w(&[0.4, -3.0], t).unwrap(), 1.0);
            assert_eq!(unit.ratio_tilde(&[0.4, -3.0], t).unwrap(), 1.0);
        }
        let w = fig_oracle().ratio_w(&[2.0, 2.0], 0.0).unwrap();
        assert_relative_eq!(w, 5.0, max_relative = 1e-5);
    }

    #[test]
    fn tilde_values() {
        // w = 5 exactly via a logit of ln 5.
        let m = linear_disc([0.0, 0.0], 5f64.ln());
        assert_relative_eq!(m.ratio_tilde(&[0.0, 0.0], 0.2).unwrap(), 2.0 * 5.0 / 6.0, max_relative = 1e-14);
        assert_relative_eq!(
            m.ratio_tilde_alpha(&[0.0, 0.0], 0.2, 0.5).unwrap(),
            2.0 * 5f64.sqrt() / (1.0 + 5f64.sqrt()),
            max_relative = 1e-14
        );
        assert_relative_eq!(1.381_966, 2.0 * 5f64.sqrt() / (1.0 + 5f64.sqrt()), max_relative = 1e-6);

        // Direct evaluation against p_obs = p_bias/2 + p_data/2 at the minority mode.
        let p_data = GaussianMixture::two_mode(2, 0.5).unwrap();
        let p_obs = GaussianMixture::two_mode(2, 0.1).unwrap().blend(&p_data, 0.5).unwrap();
        let direct = crate::mixture::true_ratio(&p_data, &p_obs, &[2.0, 2.0]).unwrap();
        let via = fig_oracle().ratio_tilde(&[2.0, 2.0], 0.0).unwrap();
        assert_relative_eq!(direct, via, max_relative = 1e-12);
        assert_relative_eq!(via, 1.666_666, max_relative = 1e-5);
    }

    #[test]
    fn alpha_endpoints() {
        let m = fig_oracle();
        let x = [1.3, 0.4];
        assert_eq!(m.ratio_tilde_alpha(&x, 0.1, 0.0).unwrap(), 1.0);
        assert!(m.grad_log_tilde(&x, 0.1, 0.0).unwrap().iter().all(|v| *v == 0.0));
        assert_eq!(
            m.ratio_tilde_alpha(&x, 0.1, 1.0).unwrap(),
            m.ratio_tilde(&x, 0.1).unwrap()
        );
        assert!(m.ratio_tilde_alpha(&x, 0.1, -0.5).is_err());
    }

    #[test]
    fn tilde_stays_inside_open_interval() {
        let m = linear_disc([1.0, -2.0], 0.3);
        for x in [[-30.0, 40.0], [0.0, 0.0], [5.0, -5.0]] {
            let v = m.ratio_tilde(&x, 0.5).unwrap();
            assert!(v > 0.0 && v < 2.0, "{v}");
        }
    }

    #[test]
    fn clamp_bounds_learned_ratio() {
        let m = linear_disc([10.0, 0.0], 0.0);
        assert_relative_eq!(m.ratio_w(&[5.0, 0.0], 0.3).unwrap(), 1000.0, max_relative = 1e-12);
        assert_relative_eq!(m.ratio_w(&[-5.0, 0.0], 0.3).unwrap(), 1e-3, max_relative = 1e-12);
        assert_eq!(m.grad_log_w(&[5.0, 0.0], 0.3).unwrap(), vec![0.0, 0.0]);
        assert_eq!(m.grad_log_w(&[0.1, 0.0], 0.3).unwrap(), vec![10.0, 0.0]);
        assert_eq!(m.log_ratio(&[0.1, 0.0], 0.3).unwrap(), m.logit(&[0.1, 0.0], 0.3).unwrap());
    }

    #[test]
    fn oracle_gradient_is_score_difference() {
        let sched = VpSchedule::default();
        let m = fig_oracle();
        let t = 0.25;
        let p_data = GaussianMixture::two_mode(2, 0.5).unwrap().perturb(&sched, t).unwrap();
        let p_bias = GaussianMixture::two_mode(2, 0.1).unwrap().perturb(&sched, t).unwrap();
        let x = [0.4, -0.2];
        let g = m.grad_log_w(&x, t).unwrap();
        let sd = p_data.score(&x).unwrap();
        let sb = p_bias.score(&x).unwrap();
        assert_eq!(g, vec![sd[0] - sb[0], sd[1] - sb[1]]);
        let unit = RatioModel::unit(p_bias, sched);
        assert_eq!(unit.grad_log_w(&x, t).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn time_independent_model_ignores_time() {
        let arch = NetArch::toy(2, 1);
        let net = Mlp::init(arch, 3).unwrap();
        let m = RatioModel::learned(net.clone(), VpSchedule::default(), false).unwrap();
        let x = [0.2, 0.9];
        assert_eq!(m.logit(&x, 0.7).unwrap(), net.forward(&x, 0.0).unwrap()[0]);
    }

    #[test]
    fn dre_mse_of_oracle_against_itself_is_zero() {
        let m = fig_oracle();
        let pooled = GaussianMixture::two_mode(2, 0.1)
            .unwrap()
            .blend(&GaussianMixture::two_mode(2, 0.5).unwrap(), 0.5)
            .unwrap();
        assert_eq!(dre_mse(&m, &m, &pooled, 0.3, 500, 1).unwrap(), 0.0);
        let r = integrated_dre_error(&m, &m, &m, &pooled, &[0.0, 0.5, 1.0], 200, 1).unwrap();
        assert_eq!(r.ratio, 1.0);
        assert_eq!(r.per_t.len(), 3);
        assert!(r.per_t.iter().all(|p| p.mse_time_dependent >= 0.0));
    }

    #[test]
    fn degenerate_denominator_is_an_error() {
        let oracle = fig_oracle();
        let off = linear_disc([0.0, 0.0], 0.0);
        let pooled = GaussianMixture::two_mode(2, 0.3).unwrap();
        let r = integrated_dre_error(&off, &oracle, &oracle, &pooled, &[0.0, 1.0], 100, 2);
        assert!(matches!(r, Err(Error::Degenerate(_))));
    }

    #[test]
    fn empty_split_is_rejected() {
        let p = GaussianMixture::two_mode(2, 0.1).unwrap();
        assert!(DatasetSplit::generate(&p, &p, 10, 0, 1).is_err());
        let split = DatasetSplit::new(Array2::zeros((3, 2)), Array2::zeros((0, 2))).unwrap();
        let cfg = DiscConfig {
            train: TrainConfig {
                arch: NetArch::toy(2, 1),
                steps: 1,
                batch_size: 4,
                adam: Default::default(),
                lr_schedule: crate::training::LrSchedule::Constant,
                seed: 0,
            },
            time_dependent: true,
        };
        assert!(matches!(
            train_discriminator(&split, &VpSchedule::default(), &cfg),
            Err(Error::Input(_))
        ));
    }

    #[test]
    fn checkpoint_round_trip_keeps_time_mode() {
        let net = Mlp::init(NetArch::toy(2, 1), 5).unwrap();
        let m = RatioModel::learned(net, VpSchedule::default(), false).unwrap();
        let ck = m.to_checkpoint().unwrap();
        assert_eq!(ck.role, "discriminator");
        let back = RatioModel::from_checkpoint(
            crate::nn::Checkpoint::from_bytes(&ck.to_bytes()).unwrap(),
            VpSchedule::default(),
        )
        .unwrap();
        assert_eq!(back, m);
    }
}
