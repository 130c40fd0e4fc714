//! Variance-preserving SDE: linear beta schedule, the closed-form perturbation
//! kernel `x_t = alpha(t) x_0 + sigma(t) eps`, and reverse-time integrators.

use ndarray::Array2;
use rand::Rng as _;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::rng;
use crate::score::ScoreFn;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VpSchedule {
    pub beta_min: f64,
    pub beta_max: f64,
    /// Horizon `T`.
    pub t_max: f64,
    /// Smallest time used for training and sampling.
    pub t_eps: f64,
}

impl Default for VpSchedule {
    fn default() -> Self {
        Self {
            beta_min: 0.1,
            beta_max: 20.0,
            t_max: 1.0,
            t_eps: 1e-3,
        }
    }
}

impl VpSchedule {
    pub fn new(beta_min: f64, beta_max: f64, t_max: f64, t_eps: f64) -> Result<Self> {
        let s = Self {
            beta_min,
            beta_max,
            t_max,
            t_eps,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.beta_min > 0.0 && self.beta_max >= self.beta_min && self.beta_max.is_finite()) {
            return Err(Error::Input(format!(
                "need 0 < beta_min <= beta_max, got {} and {}",
                self.beta_min, self.beta_max
            )));
        }
        if !(self.t_max > 0.0 && self.t_max.is_finite()) {
            return Err(Error::Input(format!("horizon {} must be positive", self.t_max)));
        }
        if !(self.t_eps > 0.0 && self.t_eps < self.t_max) {
            return Err(Error::Input(format!(
                "t_eps {} must lie in (0, {})",
                self.t_eps, self.t_max
            )));
        }
        Ok(())
    }

    pub fn beta(&self, t: f64) -> f64 {
        self.beta_min + t * (self.beta_max - self.beta_min)
    }

    /// `int_0^t beta(s) ds`.
    fn integrated_beta(&self, t: f64) -> f64 {
        self.beta_min * t + 0.5 * (self.beta_max - self.beta_min) * t * t
    }

    fn check_time(&self, t: f64) -> Result<()> {
        if (0.0..=self.t_max).contains(&t) {
            Ok(())
        } else {
            Err(Error::TimeRange {
                t,
                lo: 0.0,
                hi: self.t_max,
            })
        }
    }

    /// Kernel coefficients `(alpha(t), sigma(t))`, with `sigma^2 = 1 - alpha^2`.
    pub fn alpha_sigma(&self, t: f64) -> Result<(f64, f64)> {
        self.check_time(t)?;
        Ok(self.alpha_sigma_unchecked(t))
    }

    pub(crate) fn alpha_sigma_unchecked(&self, t: f64) -> (f64, f64) {
        let b = self.integrated_beta(t);
        let alpha = (-0.5 * b).exp();
        // expm1 keeps sigma accurate for small t.
        let sigma = (-(-b).exp_m1()).sqrt();
        (alpha, sigma)
    }

    /// `sigma(t)^2`, the default temporal loss weight.
    pub fn sigma_squared(&self, t: f64) -> f64 {
        -(-self.integrated_beta(t)).exp_m1()
    }

    pub fn forward_sample(&self, x0: &[f64], t: f64, noise: &[f64]) -> Result<Vec<f64>> {
        check_dim(x0.len(), noise.len())?;
        let (alpha, sigma) = self.alpha_sigma(t)?;
        Ok(x0
            .iter()
            .zip(noise)
            .map(|(x, e)| alpha * x + sigma * e)
            .collect())
    }

    /// `grad_{x_t} log p(x_t | x_0) = -(x_t - alpha x_0) / sigma^2`.
    pub fn cond_score(&self, x_t: &[f64], x0: &[f64], t: f64) -> Result<Vec<f64>> {
        check_dim(x0.len(), x_t.len())?;
        self.check_time(t)?;
        if t < self.t_eps {
            return Err(Error::Singularity {
                t,
                t_eps: self.t_eps,
            });
        }
        let (alpha, _) = self.alpha_sigma_unchecked(t);
        let var = self.sigma_squared(t);
        Ok(x_t
            .iter()
            .zip(x0)
            .map(|(xt, x)| -(xt - alpha * x) / var)
            .collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum SamplerKind {
    ProbabilityFlowOde,
    ReverseSde,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Integrator {
    Euler,
    Heun,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplerSpec {
    pub kind: SamplerKind,
    pub steps: usize,
    pub integrator: Integrator,
    pub seed: u64,
}

impl Default for SamplerSpec {
    fn default() -> Self {
        Self {
            kind: SamplerKind::ProbabilityFlowOde,
            steps: 200,
            integrator: Integrator::Heun,
            seed: 0,
        }
    }
}

impl SamplerSpec {
    pub fn validate(&self) -> Result<()> {
        if self.steps < 2 {
            return Err(Error::Input(format!(
                "sampler needs at least 2 steps, got {}",
                self.steps
            )));
        }
        Ok(())
    }
}

/// Integrates from the `N(0, I)` prior at `T` down to `t_eps`.
///
/// Trajectory `i` draws its prior sample and any diffusion noise from stream
/// `i` of `spec.seed`, so rows do not depend on evaluation order.
pub fn reverse_generate(
    sched: &VpSchedule,
    score: &dyn ScoreFn,
    spec: &SamplerSpec,
    n: usize,
) -> Result<Array2<f64>> {
    spec.validate()?;
    sched.validate()?;
    if n == 0 {
        return Err(Error::Input("need at least one sample".into()));
    }
    let dim = score.dim();
    let rows: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| trajectory(sched, score, spec, dim, i as u64))
        .collect::<Result<_>>()?;
    let flat: Vec<f64> = rows.into_iter().flatten().collect();
    Ok(Array2::from_shape_vec((n, dim), flat).expect("row lengths equal dim"))
}

fn trajectory(
    sched: &VpSchedule,
    score: &dyn ScoreFn,
    spec: &SamplerSpec,
    dim: usize,
    index: u64,
) -> Result<Vec<f64>> {
    let mut rng = rng::stream(spec.seed, index);
    let mut x: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
    let h = (sched.t_max - sched.t_eps) / spec.steps as f64;
    let stochastic = spec.kind == SamplerKind::ReverseSde;
    let mut z = vec![0.0; dim];

    for step in 0..spec.steps {
        let t = sched.t_max - step as f64 * h;
        let t_next = if step + 1 == spec.steps {
            sched.t_eps
        } else {
            t - h
        };
        let dt = t - t_next;
        let d1 = drift(sched, score, &x, t, stochastic, step)?;
        if stochastic {
            for zi in z.iter_mut() {
                *zi = rng.sample(StandardNormal);
            }
        }
        let kick = (sched.beta(t) * dt).sqrt();
        let euler: Vec<f64> = x
            .iter()
            .zip(&d1)
            .zip(&z)
            .map(|((xi, di), zi)| xi - dt * di + if stochastic { kick * zi } else { 0.0 })
            .collect();
        x = match spec.integrator {
            Integrator::Euler => euler,
            Integrator::Heun => {
                let d2 = drift(sched, score, &euler, t_next, stochastic, step)?;
                x.iter()
                    .zip(d1.iter().zip(&d2))
                    .zip(&z)
                    .map(|((xi, (a, b)), zi)| {
                        xi - 0.5 * dt * (a + b) + if stochastic { kick * zi } else { 0.0 }
                    })
                    .collect()
            }
        };
    }
    Ok(x)
}

/// Forward-time drift of the reverse dynamics:
/// `f - g^2 s / 2` for the ODE, `f - g^2 s` for the SDE.
fn drift(
    sched: &VpSchedule,
    score: &dyn ScoreFn,
    x: &[f64],
    t: f64,
    stochastic: bool,
    step: usize,
) -> Result<Vec<f64>> {
    let s = score.score(x, t);
    if s.len() != x.len() || s.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical {
            step,
            t,
            detail: "score function returned a non-finite value".into(),
        });
    }
    let beta = sched.beta(t);
    let c = if stochastic { 1.0 } else { 0.5 };
    Ok(x.iter()
        .zip(&s)
        .map(|(xi, si)| -0.5 * beta * xi - c * beta * si)
        .collect())
}
