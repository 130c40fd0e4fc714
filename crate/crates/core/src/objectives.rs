//! Score-matching objectives and the score-training loop.
//!
//! Every objective here is a per-sample loss of the form
//!
//! ```text
//! lambda(t) * weight * || s(x_t, t) - target ||^2 / 2,   x_t = alpha x0 + sigma eps
//! ```
//!
//! and the variants differ only in `weight` and `target`:
//!
//! | kind              | weight               | target                               |
//! |-------------------|----------------------|--------------------------------------|
//! | `dsm`             | 1                    | `grad log p(x_t given x0)`           |
//! | `iw-dsm`          | `w~(x0)` at t = 0    | conditional score                    |
//! | `tiw-dsm`         | `w~(x_t)`            | conditional + `grad log w~(x_t)`     |
//! | `tiw-alpha`       | `w~_alpha(x_t)`      | conditional + `grad log w~_alpha`    |
//! | `weight-only`     | `w~_alpha(x_t)`      | conditional score                    |
//! | `correction-only` | 1                    | conditional + `grad log w~_alpha`    |
//! | `interpolated`    | dsm below `tau`, `tiw-alpha` from `tau` on                  ||
//! | `sm-oracle`       | 1                    | exact `grad log p_data^t(x_t)`       |
//!
//! With [`RatioForm::Pooled`] the ratio is taken against the pooled
//! observation mixture `p_bias/2 + p_data/2` and draws should come from
//! [`DataStream::Balanced`]; with [`RatioForm::Direct`] the weight is `w^alpha`
//! against `p_bias` and draws come from the bias split.

use clap::ValueEnum;
use ndarray::Array2;
use rand::Rng as _;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::mixture::GaussianMixture;
use crate::nn::{adam_step_with_lr, Mlp, OptimState};
use crate::quadrature::CompositeRule;
use crate::ratio::{DatasetSplit, RatioModel, WeightTerms};
use crate::rng;
use crate::score::{ScoreFn, TrainableScore};
use crate::sde::VpSchedule;
use crate::training::TrainConfig;

/// Batch-mean losses above this abort training.
pub const DIVERGENCE_LOSS: f64 = 1e6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum ObjectiveKind {
    Dsm,
    SmOracle,
    IwDsm,
    TiwDsm,
    TiwAlpha,
    WeightOnly,
    CorrectionOnly,
    Interpolated,
}

impl ObjectiveKind {
    pub fn needs_ratio(self) -> bool {
        !matches!(self, Self::Dsm | Self::SmOracle)
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Dsm => "dsm",
            Self::SmOracle => "sm-oracle",
            Self::IwDsm => "iw-dsm",
            Self::TiwDsm => "tiw-dsm",
            Self::TiwAlpha => "tiw-alpha",
            Self::WeightOnly => "weight-only",
            Self::CorrectionOnly => "correction-only",
            Self::Interpolated => "interpolated",
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum LambdaKind {
    #[default]
    SigmaSquared,
    Uniform,
}

/// Where training draws `x0` from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum DataStream {
    Bias,
    Reference,
    /// Uniform over the union of both splits (empirical proportions).
    Pooled,
    /// Half of every batch from each split.
    Balanced,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum RatioForm {
    /// `w~_alpha = 2 w^alpha / (1 + w^alpha)`, against `p_bias/2 + p_data/2`.
    #[default]
    Pooled,
    /// `w^alpha`, against `p_bias`.
    Direct,
}

fn default_alpha() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObjectiveSpec {
    pub kind: ObjectiveKind,
    /// Ratio exponent for `tiw-alpha`, the ablations and `interpolated`.
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    /// Switch time for `interpolated`.
    #[serde(default)]
    pub tau: f64,
    #[serde(default)]
    pub lambda: LambdaKind,
    #[serde(default)]
    pub ratio_form: RatioForm,
    /// Defaults to [`ObjectiveSpec::default_stream`].
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stream: Option<DataStream>,
    /// Defaults to `[t_eps, T]`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_range: Option<[f64; 2]>,
}

impl ObjectiveSpec {
    pub fn new(kind: ObjectiveKind) -> Self {
        Self {
            kind,
            alpha: 1.0,
            tau: 0.0,
            lambda: LambdaKind::SigmaSquared,
            ratio_form: RatioForm::Pooled,
            stream: None,
            t_range: None,
        }
    }

    pub fn dsm() -> Self {
        Self::new(ObjectiveKind::Dsm)
    }

    pub fn tiw_dsm() -> Self {
        Self::new(ObjectiveKind::TiwDsm)
    }

    pub fn tiw_alpha(alpha: f64) -> Self {
        Self {
            alpha,
            ..Self::new(ObjectiveKind::TiwAlpha)
        }
    }

    pub fn with_stream(mut self, stream: DataStream) -> Self {
        self.stream = Some(stream);
        self
    }

    pub fn with_form(mut self, form: RatioForm) -> Self {
        self.ratio_form = form;
        self
    }

    /// The `alpha` actually applied: 1 for `tiw-dsm`, `self.alpha` for the
    /// other ratio-using kinds.
    pub fn effective_alpha(&self) -> f64 {
        match self.kind {
            ObjectiveKind::TiwDsm | ObjectiveKind::IwDsm => 1.0,
            _ => self.alpha,
        }
    }

    pub fn default_stream(&self) -> DataStream {
        match (self.kind, self.ratio_form) {
            (ObjectiveKind::Dsm, _) => DataStream::Pooled,
            (ObjectiveKind::SmOracle, _) => DataStream::Reference,
            (_, RatioForm::Pooled) => DataStream::Balanced,
            (_, RatioForm::Direct) => DataStream::Bias,
        }
    }

    pub fn stream(&self) -> DataStream {
        self.stream.unwrap_or_else(|| self.default_stream())
    }

    pub fn t_range(&self, sched: &VpSchedule) -> (f64, f64) {
        match self.t_range {
            Some([lo, hi]) => (lo, hi),
            None => (sched.t_eps, sched.t_max),
        }
    }

    pub fn validate(&self, sched: &VpSchedule) -> Result<()> {
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return Err(Error::Input(format!("alpha must be >= 0, got {}", self.alpha)));
        }
        if !(0.0..=sched.t_max).contains(&self.tau) {
            return Err(Error::Input(format!(
                "tau must lie in [0, {}], got {}",
                sched.t_max, self.tau
            )));
        }
        let (lo, hi) = self.t_range(sched);
        if !(lo >= sched.t_eps && hi <= sched.t_max && lo < hi) {
            return Err(Error::Input(format!(
                "t_range [{lo}, {hi}] must be a non-empty subset of [{}, {}]",
                sched.t_eps, sched.t_max
            )));
        }
        Ok(())
    }
}

/// One Monte-Carlo draw: data point, diffusion time, kernel noise and the
/// cached time-zero weight used by `iw-dsm` (1 elsewhere).
#[derive(Debug, Clone, PartialEq)]
pub struct Draw {
    pub x0: Vec<f64>,
    pub t: f64,
    pub noise: Vec<f64>,
    pub x0_weight: f64,
}

impl Draw {
    pub fn new(x0: Vec<f64>, t: f64, noise: Vec<f64>) -> Self {
        Self {
            x0,
            t,
            noise,
            x0_weight: 1.0,
        }
    }
}

/// Telemetry record of one evaluated draw.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossSample {
    pub x0: Vec<f64>,
    pub t: f64,
    pub noise: Vec<f64>,
    pub loss: f64,
    pub weight: f64,
}

/// Everything a per-sample loss needs besides the network output.
#[derive(Debug, Clone, PartialEq)]
pub struct RegressionTerms {
    pub x_t: Vec<f64>,
    pub lambda: f64,
    pub weight: f64,
    pub target: Vec<f64>,
}

fn lambda_at(kind: LambdaKind, sched: &VpSchedule, t: f64) -> f64 {
    match kind {
        LambdaKind::SigmaSquared => sched.sigma_squared(t),
        LambdaKind::Uniform => 1.0,
    }
}

fn squared_residual_loss(s: &[f64], terms: &RegressionTerms) -> f64 {
    let sq: f64 = s
        .iter()
        .zip(&terms.target)
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    0.5 * terms.lambda * terms.weight * sq
}

fn shifted(mut target: Vec<f64>, shift: &[f64]) -> Vec<f64> {
    for (a, b) in target.iter_mut().zip(shift) {
        *a += b;
    }
    target
}

/// An objective bound to its schedule and, where needed, a density-ratio
/// model or the exact target mixture.
#[derive(Debug, Clone)]
pub struct Objective<'a> {
    pub spec: ObjectiveSpec,
    pub sched: VpSchedule,
    pub ratio: Option<&'a RatioModel>,
    pub target_mixture: Option<&'a GaussianMixture>,
}

impl<'a> Objective<'a> {
    pub fn new(
        spec: ObjectiveSpec,
        sched: VpSchedule,
        ratio: Option<&'a RatioModel>,
    ) -> Result<Self> {
        spec.validate(&sched)?;
        sched.validate()?;
        if spec.kind.needs_ratio() && ratio.is_none() {
            return Err(Error::Input(format!(
                "objective `{}` needs a density-ratio model",
                spec.kind.name()
            )));
        }
        if spec.kind == ObjectiveKind::SmOracle {
            return Err(Error::Input(
                "`sm-oracle` needs the exact target mixture; use Objective::sm_oracle".into(),
            ));
        }
        Ok(Self {
            spec,
            sched,
            ratio,
            target_mixture: None,
        })
    }

    /// Regression onto the exact score of `p_data` diffused to time `t`.
    pub fn sm_oracle(p_data: &'a GaussianMixture, sched: VpSchedule, lambda: LambdaKind) -> Result<Self> {
        let spec = ObjectiveSpec {
            lambda,
            ..ObjectiveSpec::new(ObjectiveKind::SmOracle)
        };
        spec.validate(&sched)?;
        Ok(Self {
            spec,
            sched,
            ratio: None,
            target_mixture: Some(p_data),
        })
    }

    fn ratio_terms(&self, x_t: &[f64], t: f64) -> Result<WeightTerms> {
        let rm = self.ratio.expect("checked at construction");
        let alpha = self.spec.effective_alpha();
        let terms = match self.spec.ratio_form {
            RatioForm::Pooled => rm.tilde_terms(x_t, t, alpha)?,
            RatioForm::Direct => rm.direct_terms(x_t, t, alpha)?,
        };
        if !terms.weight.is_finite() || terms.grad_log.iter().any(|g| !g.is_finite()) {
            return Err(Error::Numerical {
                step: 0,
                t,
                detail: "non-finite density-ratio weight or correction".into(),
            });
        }
        Ok(terms)
    }

    /// The weight used for `iw-dsm` at a data point (ratio at `t = 0`).
    pub fn origin_weight(&self, x0: &[f64]) -> Result<f64> {
        let rm = self
            .ratio
            .ok_or_else(|| Error::Input("origin weight needs a ratio model".into()))?;
        match self.spec.ratio_form {
            RatioForm::Pooled => rm.ratio_tilde(x0, 0.0),
            RatioForm::Direct => rm.ratio_w(x0, 0.0),
        }
    }

    pub fn terms(&self, draw: &Draw) -> Result<RegressionTerms> {
        let Draw {
            x0, t, noise, x0_weight,
        } = draw;
        let t = *t;
        let x_t = self.sched.forward_sample(x0, t, noise)?;
        let cond = self.sched.cond_score(&x_t, x0, t)?;
        let lambda = lambda_at(self.spec.lambda, &self.sched, t);
        let (weight, target) = match self.spec.kind {
            ObjectiveKind::Dsm => (1.0, cond),
            ObjectiveKind::IwDsm => (*x0_weight, cond),
            ObjectiveKind::TiwDsm | ObjectiveKind::TiwAlpha => {
                let r = self.ratio_terms(&x_t, t)?;
                (r.weight, shifted(cond, &r.grad_log))
            }
            ObjectiveKind::WeightOnly => (self.ratio_terms(&x_t, t)?.weight, cond),
            ObjectiveKind::CorrectionOnly => {
                let r = self.ratio_terms(&x_t, t)?;
                (1.0, shifted(cond, &r.grad_log))
            }
            ObjectiveKind::Interpolated => {
                if t < self.spec.tau {
                    (1.0, cond)
                } else {
                    let r = self.ratio_terms(&x_t, t)?;
                    (r.weight, shifted(cond, &r.grad_log))
                }
            }
            ObjectiveKind::SmOracle => {
                let gm = self.target_mixture.expect("checked at construction");
                let (a, s) = self.sched.alpha_sigma(t)?;
                (1.0, gm.scaled(a, s).score(&x_t)?)
            }
        };
        Ok(RegressionTerms {
            x_t,
            lambda,
            weight,
            target,
        })
    }

    pub fn loss(&self, net: &dyn ScoreFn, draw: &Draw) -> Result<LossSample> {
        check_dim(net.dim(), draw.x0.len())?;
        let terms = self.terms(draw)?;
        let s = net.score(&terms.x_t, draw.t);
        Ok(LossSample {
            x0: draw.x0.clone(),
            t: draw.t,
            noise: draw.noise.clone(),
            loss: squared_residual_loss(&s, &terms),
            weight: terms.weight,
        })
    }

    /// Per-sample loss, adding its parameter gradient into `grad`.
    pub fn loss_and_grad(
        &self,
        net: &dyn TrainableScore,
        draw: &Draw,
        grad: &mut [f64],
    ) -> Result<LossSample> {
        check_dim(net.dim(), draw.x0.len())?;
        let terms = self.terms(draw)?;
        let scale = terms.lambda * terms.weight;
        let s = net.score_and_backprop(
            &terms.x_t,
            draw.t,
            &mut |s: &[f64]| {
                s.iter()
                    .zip(&terms.target)
                    .map(|(a, b)| scale * (a - b))
                    .collect()
            },
            grad,
        );
        Ok(LossSample {
            x0: draw.x0.clone(),
            t: draw.t,
            noise: draw.noise.clone(),
            loss: squared_residual_loss(&s, &terms),
            weight: terms.weight,
        })
    }

    /// Mean loss and mean parameter gradient over `draws`. Chunks are
    /// evaluated in parallel and reduced in a fixed order, so the result does
    /// not depend on the thread count.
    pub fn batch_loss_and_grad(
        &self,
        net: &dyn TrainableScore,
        draws: &[Draw],
    ) -> Result<(f64, Vec<f64>)> {
        if draws.is_empty() {
            return Err(Error::Input("empty batch".into()));
        }
        let np = net.num_params();
        let partials = draws
            .par_chunks(64)
            .map(|chunk| {
                let mut g = vec![0.0; np];
                let mut l = 0.0;
                for d in chunk {
                    l += self.loss_and_grad(net, d, &mut g)?.loss;
                }
                Ok((l, g))
            })
            .collect::<Result<Vec<_>>>()?;
        let mut loss = 0.0;
        let mut grad = vec![0.0; np];
        for (l, g) in partials {
            loss += l;
            for (a, b) in grad.iter_mut().zip(g) {
                *a += b;
            }
        }
        let n = draws.len() as f64;
        grad.iter_mut().for_each(|g| *g /= n);
        Ok((loss / n, grad))
    }
}

pub fn persample_dsm(
    net: &dyn ScoreFn,
    x0: &[f64],
    t: f64,
    noise: &[f64],
    sched: &VpSchedule,
    lambda: LambdaKind,
) -> Result<f64> {
    let spec = ObjectiveSpec {
        lambda,
        ..ObjectiveSpec::dsm()
    };
    let obj = Objective::new(spec, *sched, None)?;
    Ok(obj.loss(net, &Draw::new(x0.to_vec(), t, noise.to_vec()))?.loss)
}

#[allow(clippy::too_many_arguments)]
pub fn persample_tiw_dsm(
    net: &dyn ScoreFn,
    x0: &[f64],
    t: f64,
    noise: &[f64],
    sched: &VpSchedule,
    rm: &RatioModel,
    lambda: LambdaKind,
    alpha: f64,
) -> Result<f64> {
    let spec = ObjectiveSpec {
        lambda,
        ..ObjectiveSpec::tiw_alpha(alpha)
    };
    let obj = Objective::new(spec, *sched, Some(rm))?;
    Ok(obj.loss(net, &Draw::new(x0.to_vec(), t, noise.to_vec()))?.loss)
}

pub fn persample_iw_dsm(
    net: &dyn ScoreFn,
    x0_origin_weight: f64,
    x0: &[f64],
    t: f64,
    noise: &[f64],
    sched: &VpSchedule,
    lambda: LambdaKind,
) -> Result<f64> {
    if !(x0_origin_weight >= 0.0 && x0_origin_weight.is_finite()) {
        return Err(Error::Input(format!(
            "importance weight must be finite and >= 0, got {x0_origin_weight}"
        )));
    }
    Ok(x0_origin_weight * persample_dsm(net, x0, t, noise, sched, lambda)?)
}

/// `weight-only` or `correction-only` with ratio exponent `alpha`.
#[allow(clippy::too_many_arguments)]
pub fn persample_ablation(
    kind: ObjectiveKind,
    net: &dyn ScoreFn,
    x0: &[f64],
    t: f64,
    noise: &[f64],
    sched: &VpSchedule,
    rm: &RatioModel,
    lambda: LambdaKind,
    alpha: f64,
) -> Result<f64> {
    if !matches!(kind, ObjectiveKind::WeightOnly | ObjectiveKind::CorrectionOnly) {
        return Err(Error::Input(format!("`{}` is not an ablation", kind.name())));
    }
    let spec = ObjectiveSpec {
        lambda,
        alpha,
        ..ObjectiveSpec::new(kind)
    };
    let obj = Objective::new(spec, *sched, Some(rm))?;
    Ok(obj.loss(net, &Draw::new(x0.to_vec(), t, noise.to_vec()))?.loss)
}

#[allow(clippy::too_many_arguments)]
pub fn persample_interpolated(
    tau: f64,
    net: &dyn ScoreFn,
    x0: &[f64],
    t: f64,
    noise: &[f64],
    sched: &VpSchedule,
    rm: &RatioModel,
    lambda: LambdaKind,
) -> Result<f64> {
    let spec = ObjectiveSpec {
        lambda,
        tau,
        ..ObjectiveSpec::new(ObjectiveKind::Interpolated)
    };
    let obj = Objective::new(spec, *sched, Some(rm))?;
    Ok(obj.loss(net, &Draw::new(x0.to_vec(), t, noise.to_vec()))?.loss)
}

/// Tensor-product Gauss–Legendre grid for [`loss_sm_oracle`]: `t_panels`
/// panels over `[t_eps, T]` and, at each time node, `x_panels` panels per
/// coordinate over the box `mean ± width_std * sd` of `p_data^t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadratureGrid {
    pub t_panels: usize,
    pub x_panels: usize,
    pub order: usize,
    pub width_std: f64,
}

impl Default for QuadratureGrid {
    fn default() -> Self {
        Self {
            t_panels: 24,
            x_panels: 24,
            order: 8,
            width_std: 6.0,
        }
    }
}

impl QuadratureGrid {
    pub fn refined(self) -> Self {
        Self {
            t_panels: 2 * self.t_panels,
            x_panels: 2 * self.x_panels,
            ..self
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SmOracleLoss {
    pub value: f64,
    pub grad: Vec<f64>,
    /// Difference between this grid and the refined grid, relative to the
    /// size of the refined result when that exceeds 1.
    pub refinement_diff: f64,
}

/// Relative refinement differences above this reject the grid.
pub const REFINEMENT_TOLERANCE: f64 = 1e-4;

/// `1/2 int lambda(t) E_{p_data^t} || s(x, t) - grad log p_data^t(x) ||^2 dt`
/// over `[t_eps, T]` and its parameter gradient, by deterministic
/// quadrature. The result on `grid` is compared against `grid.refined()` and
/// the finer value is returned; a relative difference above
/// [`REFINEMENT_TOLERANCE`] is reported as [`Error::GridTooCoarse`].
pub fn loss_sm_oracle(
    net: &dyn TrainableScore,
    grid: QuadratureGrid,
    sched: &VpSchedule,
    p_data: &GaussianMixture,
    lambda: LambdaKind,
) -> Result<SmOracleLoss> {
    check_dim(p_data.dim(), net.dim())?;
    if p_data.dim() > 2 {
        return Err(Error::Input(format!(
            "quadrature supports 1-D and 2-D mixtures, got dimension {}",
            p_data.dim()
        )));
    }
    let (v0, g0) = sm_quadrature(net, grid, sched, p_data, lambda)?;
    let (v1, g1) = sm_quadrature(net, grid.refined(), sched, p_data, lambda)?;
    let diff_sq = (v1 - v0).powi(2) + g1.iter().zip(&g0).map(|(a, b)| (a - b).powi(2)).sum::<f64>();
    let norm_sq = v1 * v1 + g1.iter().map(|a| a * a).sum::<f64>();
    let refinement_diff = (diff_sq / norm_sq.max(1.0)).sqrt();
    if refinement_diff > REFINEMENT_TOLERANCE {
        return Err(Error::GridTooCoarse {
            diff: refinement_diff,
        });
    }
    Ok(SmOracleLoss {
        value: v1,
        grad: g1,
        refinement_diff,
    })
}

fn sm_quadrature(
    net: &dyn TrainableScore,
    grid: QuadratureGrid,
    sched: &VpSchedule,
    p_data: &GaussianMixture,
    lambda: LambdaKind,
) -> Result<(f64, Vec<f64>)> {
    let t_rule = CompositeRule::new(sched.t_eps, sched.t_max, grid.t_panels, grid.order)?;
    let dim = p_data.dim();
    let np = net.num_params();
    let per_t = t_rule
        .nodes
        .par_iter()
        .zip(&t_rule.weights)
        .map(|(&t, &wt)| {
            let pt = p_data.perturb(sched, t)?;
            let (lo, hi) = pt.bounding_box(grid.width_std);
            let x_rule = CompositeRule::new(lo, hi, grid.x_panels, grid.order)?;
            let lam = lambda_at(lambda, sched, t);
            let mut value = 0.0;
            let mut grad = vec![0.0; np];
            let mut visit = |x: &[f64], wx: f64| -> Result<()> {
                let w = wt * wx * lam * pt.density(x)?;
                let target = pt.score(x)?;
                let s = net.score_and_backprop(
                    x,
                    t,
                    &mut |s: &[f64]| s.iter().zip(&target).map(|(a, b)| w * (a - b)).collect(),
                    &mut grad,
                );
                let sq: f64 = s.iter().zip(&target).map(|(a, b)| (a - b) * (a - b)).sum();
                value += 0.5 * w * sq;
                Ok(())
            };
            let n = x_rule.nodes.len();
            if dim == 1 {
                for i in 0..n {
                    visit(&[x_rule.nodes[i]], x_rule.weights[i])?;
                }
            } else {
                for i in 0..n {
                    for j in 0..n {
                        visit(
                            &[x_rule.nodes[i], x_rule.nodes[j]],
                            x_rule.weights[i] * x_rule.weights[j],
                        )?;
                    }
                }
            }
            Ok((value, grad))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut value = 0.0;
    let mut grad = vec![0.0; np];
    for (v, g) in per_t {
        value += v;
        for (a, b) in grad.iter_mut().zip(g) {
            *a += b;
        }
    }
    Ok((value, grad))
}

/// Loss telemetry: one row every `every` steps, from the first draw of the
/// batch, plus the batch mean.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TelemetryRow {
    pub step: usize,
    pub t: f64,
    pub weight: f64,
    pub loss: f64,
    pub batch_loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreReport {
    /// Mean batch loss over the last tenth of training.
    pub final_loss: f64,
    pub steps: usize,
    pub telemetry: Vec<TelemetryRow>,
}

/// Samples `x0` rows for one batch according to `stream`.
fn draw_rows(
    split: &DatasetSplit,
    stream: DataStream,
    batch: usize,
    rng: &mut rng::Rng,
) -> Vec<(bool, usize)> {
    let (nb, nr) = (split.bias.nrows(), split.reference.nrows());
    (0..batch)
        .map(|i| match stream {
            DataStream::Bias => (false, rng.random_range(0..nb)),
            DataStream::Reference => (true, rng.random_range(0..nr)),
            DataStream::Pooled => {
                let k = rng.random_range(0..nb + nr);
                if k < nb {
                    (false, k)
                } else {
                    (true, k - nb)
                }
            }
            DataStream::Balanced => {
                if i % 2 == 0 {
                    (true, rng.random_range(0..nr))
                } else {
                    (false, rng.random_range(0..nb))
                }
            }
        })
        .collect()
}

/// Trains a fresh score network with Adam on mini-batches drawn from `split`
/// according to the objective's data stream. Each draw gets `t ~ U[t_range]`
/// and standard normal kernel noise. Deterministic given `cfg.seed`.
pub fn train_score(
    split: &DatasetSplit,
    objective: &Objective<'_>,
    cfg: &TrainConfig,
    telemetry_every: usize,
) -> Result<(Mlp, ScoreReport)> {
    cfg.validate()?;
    let dim = split.dim();
    check_dim(dim, cfg.arch.input_dim)?;
    check_dim(dim, cfg.arch.output_dim)?;
    let stream = objective.spec.stream();
    let empty = match stream {
        DataStream::Bias => split.bias.nrows() == 0,
        DataStream::Reference => split.reference.nrows() == 0,
        DataStream::Pooled => split.bias.nrows() + split.reference.nrows() == 0,
        DataStream::Balanced => split.bias.nrows() == 0 || split.reference.nrows() == 0,
    };
    if empty {
        return Err(Error::Input(format!("data stream {stream:?} has no rows")));
    }

    let cache = |rows: &Array2<f64>| -> Result<Vec<f64>> {
        if objective.spec.kind != ObjectiveKind::IwDsm {
            return Ok(vec![1.0; rows.nrows()]);
        }
        rows.rows()
            .into_iter()
            .map(|r| objective.origin_weight(r.as_slice().expect("standard layout")))
            .collect()
    };
    let w_bias = cache(&split.bias)?;
    let w_ref = cache(&split.reference)?;

    let mut net = Mlp::init(cfg.arch.clone(), rng::derive_seed(cfg.seed, "score-init"))?;
    let mut opt = OptimState::new(net.num_params(), cfg.adam);
    let mut rng = rng::rng(rng::derive_seed(cfg.seed, "score-batches"));
    let (t_lo, t_hi) = objective.spec.t_range(&objective.sched);
    let tail_start = cfg.steps - (cfg.steps / 10).max(1);
    let mut tail = (0.0, 0usize);
    let mut telemetry = Vec::new();

    for step in 0..cfg.steps {
        let rows = draw_rows(split, stream, cfg.batch_size, &mut rng);
        let draws: Vec<Draw> = rows
            .into_iter()
            .map(|(is_ref, i)| {
                let (data, w) = if is_ref {
                    (&split.reference, w_ref[i])
                } else {
                    (&split.bias, w_bias[i])
                };
                let t = rng.random_range(t_lo..t_hi);
                let noise = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
                Draw {
                    x0: data.row(i).to_vec(),
                    t,
                    noise,
                    x0_weight: w,
                }
            })
            .collect();
        let (loss, grad) = objective
            .batch_loss_and_grad(&net, &draws)
            .map_err(|e| match e {
                Error::Numerical { t, detail, .. } => Error::Numerical { step, t, detail },
                other => other,
            })?;
        if !loss.is_finite() || loss > DIVERGENCE_LOSS || grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::TrainingFailure { step, loss });
        }
        if telemetry_every > 0 && step % telemetry_every == 0 {
            let first = objective.loss(&net, &draws[0])?;
            telemetry.push(TelemetryRow {
                step,
                t: first.t,
                weight: first.weight,
                loss: first.loss,
                batch_loss: loss,
            });
        }
        if step >= tail_start {
            tail.0 += loss;
            tail.1 += 1;
        }
        adam_step_with_lr(net.params_mut(), &grad, &mut opt, cfg.learning_rate(step))?;
    }
    Ok((
        net,
        ScoreReport {
            final_loss: tail.0 / tail.1.max(1) as f64,
            steps: cfg.steps,
            telemetry,
        },
    ))
}
