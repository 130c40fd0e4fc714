//! Score-function abstractions shared by the sampler, the objectives and the
//! quadrature oracle.

use crate::mixture::GaussianMixture;
use crate::sde::VpSchedule;

/// A time-dependent vector field `s(x, t)` approximating `grad log p^t(x)`.
pub trait ScoreFn: Sync {
    fn dim(&self) -> usize;
    fn score(&self, x: &[f64], t: f64) -> Vec<f64>;
}

/// A score model with parameters that can back-propagate a cotangent on its
/// output into a parameter gradient.
pub trait TrainableScore: ScoreFn {
    fn num_params(&self) -> usize;

    /// Returns `s(x, t)` and adds `J_params(x, t)^T cotangent(s)` into `grad`,
    /// where the cotangent is computed from the output by `cotangent`.
    fn score_and_backprop(
        &self,
        x: &[f64],
        t: f64,
        cotangent: &mut dyn FnMut(&[f64]) -> Vec<f64>,
        grad: &mut [f64],
    ) -> Vec<f64>;
}

/// Closure-backed score, mostly for tests and stubs.
pub struct FnScore<F> {
    dim: usize,
    f: F,
}

impl<F> FnScore<F>
where
    F: Fn(&[f64], f64) -> Vec<f64> + Sync,
{
    pub fn new(dim: usize, f: F) -> Self {
        Self { dim, f }
    }
}

impl<F> ScoreFn for FnScore<F>
where
    F: Fn(&[f64], f64) -> Vec<f64> + Sync,
{
    fn dim(&self) -> usize {
        self.dim
    }

    fn score(&self, x: &[f64], t: f64) -> Vec<f64> {
        (self.f)(x, t)
    }
}

impl<F> TrainableScore for FnScore<F>
where
    F: Fn(&[f64], f64) -> Vec<f64> + Sync,
{
    fn num_params(&self) -> usize {
        0
    }

    fn score_and_backprop(
        &self,
        x: &[f64],
        t: f64,
        cotangent: &mut dyn FnMut(&[f64]) -> Vec<f64>,
        _grad: &mut [f64],
    ) -> Vec<f64> {
        let s = (self.f)(x, t);
        cotangent(&s);
        s
    }
}

/// Exact score of a mixture pushed through the VP kernel.
#[derive(Debug, Clone)]
pub struct OracleScore {
    gm: GaussianMixture,
    sched: VpSchedule,
}

impl OracleScore {
    pub fn new(gm: GaussianMixture, sched: VpSchedule) -> Self {
        Self { gm, sched }
    }

    pub fn mixture(&self) -> &GaussianMixture {
        &self.gm
    }
}

impl ScoreFn for OracleScore {
    fn dim(&self) -> usize {
        self.gm.dim()
    }

    fn score(&self, x: &[f64], t: f64) -> Vec<f64> {
        let (alpha, sigma) = self.sched.alpha_sigma_unchecked(t);
        self.gm
            .scaled(alpha, sigma)
            .score(x)
            .unwrap_or_else(|_| vec![f64::NAN; x.len()])
    }
}
