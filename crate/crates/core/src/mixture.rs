//! Closed-form isotropic Gaussian mixtures.
//!
//! Every ground-truth quantity the lab needs is analytic here: densities,
//! scores, the exact pushforward under the VP perturbation kernel, density
//! ratios, and latent posteriors (which stand in for a pre-trained attribute
//! classifier). Densities are accumulated in the log domain so cross terms of
//! order `e^-16` and smaller do not underflow.

use std::f64::consts::PI;

use ndarray::Array2;
use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::rng;
use crate::sde::VpSchedule;

/// Densities are floored here before ratios are formed.
pub const DENSITY_FLOOR: f64 = 1e-300;

#[derive(Debug, Clone, PartialEq)]
pub struct Component {
    pub weight: f64,
    pub mean: Vec<f64>,
    /// Isotropic variance; covariance is `variance * I`.
    pub variance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MixtureSpec", into = "MixtureSpec")]
pub struct GaussianMixture {
    dim: usize,
    components: Vec<Component>,
}

/// Array-of-fields form used in config files.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MixtureSpec {
    pub weights: Vec<f64>,
    pub means: Vec<Vec<f64>>,
    pub variances: Vec<f64>,
}

impl TryFrom<MixtureSpec> for GaussianMixture {
    type Error = Error;

    fn try_from(spec: MixtureSpec) -> Result<Self> {
        if spec.weights.len() != spec.means.len() || spec.weights.len() != spec.variances.len() {
            return Err(Error::Input(format!(
                "mixture arrays disagree: {} weights, {} means, {} variances",
                spec.weights.len(),
                spec.means.len(),
                spec.variances.len()
            )));
        }
        let components = spec
            .weights
            .into_iter()
            .zip(spec.means)
            .zip(spec.variances)
            .map(|((weight, mean), variance)| Component {
                weight,
                mean,
                variance,
            })
            .collect();
        GaussianMixture::new(components)
    }
}

impl From<GaussianMixture> for MixtureSpec {
    fn from(gm: GaussianMixture) -> Self {
        MixtureSpec {
            weights: gm.components.iter().map(|c| c.weight).collect(),
            means: gm.components.iter().map(|c| c.mean.clone()).collect(),
            variances: gm.components.iter().map(|c| c.variance).collect(),
        }
    }
}

impl GaussianMixture {
    pub fn new(components: Vec<Component>) -> Result<Self> {
        let first = components
            .first()
            .ok_or_else(|| Error::Input("mixture needs at least one component".into()))?;
        let dim = first.mean.len();
        if dim == 0 {
            return Err(Error::Input("mixture dimension must be positive".into()));
        }
        let mut total = 0.0;
        for (i, c) in components.iter().enumerate() {
            check_dim(dim, c.mean.len())?;
            if !(c.weight > 0.0 && c.weight <= 1.0) {
                return Err(Error::Input(format!(
                    "component {i}: weight {} not in (0, 1]",
                    c.weight
                )));
            }
            if !(c.variance > 0.0 && c.variance.is_finite()) {
                return Err(Error::Input(format!(
                    "component {i}: variance {} must be positive",
                    c.variance
                )));
            }
            if c.mean.iter().any(|m| !m.is_finite()) {
                return Err(Error::Input(format!("component {i}: non-finite mean")));
            }
            total += c.weight;
        }
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::Input(format!("weights sum to {total}, not 1")));
        }
        Ok(Self { dim, components })
    }

    /// Single isotropic Gaussian `N(mean, variance * I)`.
    pub fn gaussian(mean: Vec<f64>, variance: f64) -> Result<Self> {
        Self::new(vec![Component {
            weight: 1.0,
            mean,
            variance,
        }])
    }

    pub fn standard_normal(dim: usize) -> Self {
        Self::gaussian(vec![0.0; dim], 1.0).expect("standard normal is valid")
    }

    /// Two-mode mixture with modes at `-(2,..,2)` and `+(2,..,2)`, unit
    /// variances, and weight `minority` on the positive mode.
    pub fn two_mode(dim: usize, minority: f64) -> Result<Self> {
        Self::new(vec![
            Component {
                weight: 1.0 - minority,
                mean: vec![-2.0; dim],
                variance: 1.0,
            },
            Component {
                weight: minority,
                mean: vec![2.0; dim],
                variance: 1.0,
            },
        ])
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn components(&self) -> &[Component] {
        &self.components
    }

    pub fn weights(&self) -> Vec<f64> {
        self.components.iter().map(|c| c.weight).collect()
    }

    /// `log(weight_i) + log N(x; mean_i, variance_i I)` for each component.
    fn log_terms(&self, x: &[f64]) -> Vec<f64> {
        let d = self.dim as f64;
        self.components
            .iter()
            .map(|c| {
                let sq: f64 = x
                    .iter()
                    .zip(&c.mean)
                    .map(|(xi, mi)| (xi - mi) * (xi - mi))
                    .sum();
                c.weight.ln() - 0.5 * d * (2.0 * PI * c.variance).ln() - 0.5 * sq / c.variance
            })
            .collect()
    }

    pub fn log_density(&self, x: &[f64]) -> Result<f64> {
        check_dim(self.dim, x.len())?;
        Ok(log_sum_exp(&self.log_terms(x)))
    }

    pub fn density(&self, x: &[f64]) -> Result<f64> {
        Ok(self.log_density(x)?.exp().max(DENSITY_FLOOR))
    }

    /// Component responsibilities `r_i(x)`; sums to one.
    pub fn posterior(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.dim, x.len())?;
        Ok(softmax(&self.log_terms(x)))
    }

    /// Most probable component; ties go to the lower index.
    pub fn assign(&self, x: &[f64]) -> Result<usize> {
        let post = self.posterior(x)?;
        let mut best = 0;
        for (i, p) in post.iter().enumerate() {
            if *p > post[best] {
                best = i;
            }
        }
        Ok(best)
    }

    /// `grad log p(x) = sum_i r_i(x) (mean_i - x) / variance_i`.
    pub fn score(&self, x: &[f64]) -> Result<Vec<f64>> {
        let post = self.posterior(x)?;
        let mut out = vec![0.0; self.dim];
        for (r, c) in post.iter().zip(&self.components) {
            let k = r / c.variance;
            for ((o, m), xi) in out.iter_mut().zip(&c.mean).zip(x) {
                *o += k * (m - xi);
            }
        }
        Ok(out)
    }

    /// Exact law of `alpha(t) x0 + sigma(t) eps` for `x0` drawn from `self`.
    pub fn perturb(&self, sched: &VpSchedule, t: f64) -> Result<Self> {
        let (alpha, sigma) = sched.alpha_sigma(t)?;
        Ok(self.scaled(alpha, sigma))
    }

    pub(crate) fn scaled(&self, alpha: f64, sigma: f64) -> Self {
        if alpha == 1.0 && sigma == 0.0 {
            return self.clone();
        }
        let components = self
            .components
            .iter()
            .map(|c| Component {
                weight: c.weight,
                mean: c.mean.iter().map(|m| alpha * m).collect(),
                variance: alpha * alpha * c.variance + sigma * sigma,
            })
            .collect();
        Self {
            dim: self.dim,
            components,
        }
    }

    /// Pools two mixtures of equal dimension with weights `a` and `1 - a`.
    pub fn blend(&self, other: &Self, a: f64) -> Result<Self> {
        check_dim(self.dim, other.dim)?;
        if !(a > 0.0 && a < 1.0) {
            return Err(Error::Input(format!("blend weight {a} not in (0, 1)")));
        }
        let mut components: Vec<Component> = self
            .components
            .iter()
            .map(|c| Component {
                weight: a * c.weight,
                ..c.clone()
            })
            .collect();
        components.extend(other.components.iter().map(|c| Component {
            weight: (1.0 - a) * c.weight,
            ..c.clone()
        }));
        Ok(Self {
            dim: self.dim,
            components,
        })
    }

    /// I.i.d. draws; the component is picked by weight, then a Gaussian draw.
    pub fn sample(&self, n: usize, seed: u64) -> Result<Array2<f64>> {
        if n == 0 {
            return Err(Error::Input("sample count must be at least 1".into()));
        }
        let mut rng = rng::rng(seed);
        let mut out = Array2::zeros((n, self.dim));
        for mut row in out.rows_mut() {
            let c = self.pick(rng.random::<f64>());
            let sd = c.variance.sqrt();
            for (o, m) in row.iter_mut().zip(&c.mean) {
                let z: f64 = rng.sample(StandardNormal);
                *o = m + sd * z;
            }
        }
        Ok(out)
    }

    fn pick(&self, u: f64) -> &Component {
        let mut acc = 0.0;
        for c in &self.components {
            acc += c.weight;
            if u < acc {
                return c;
            }
        }
        self.components.last().expect("non-empty")
    }

    /// Smallest and largest per-coordinate extent of `mean ± k sd` over components.
    pub fn bounding_box(&self, k: f64) -> (f64, f64) {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for c in &self.components {
            let sd = c.variance.sqrt();
            for m in &c.mean {
                lo = lo.min(m - k * sd);
                hi = hi.max(m + k * sd);
            }
        }
        (lo, hi)
    }

    /// Per-coordinate mean and (total) variance of the mixture.
    pub fn moments(&self) -> (Vec<f64>, Vec<f64>) {
        let mut mean = vec![0.0; self.dim];
        for c in &self.components {
            for (m, cm) in mean.iter_mut().zip(&c.mean) {
                *m += c.weight * cm;
            }
        }
        let mut var = vec![0.0; self.dim];
        for c in &self.components {
            for ((v, cm), m) in var.iter_mut().zip(&c.mean).zip(&mean) {
                *v += c.weight * (c.variance + (cm - m) * (cm - m));
            }
        }
        (mean, var)
    }
}

/// `p_num(x) / p_den(x)` with both densities floored at [`DENSITY_FLOOR`].
pub fn true_ratio(p_num: &GaussianMixture, p_den: &GaussianMixture, x: &[f64]) -> Result<f64> {
    Ok(log_true_ratio(p_num, p_den, x)?.exp())
}

pub fn log_true_ratio(p_num: &GaussianMixture, p_den: &GaussianMixture, x: &[f64]) -> Result<f64> {
    check_dim(p_num.dim, p_den.dim)?;
    let floor = DENSITY_FLOOR.ln();
    Ok(p_num.log_density(x)?.max(floor) - p_den.log_density(x)?.max(floor))
}

pub(crate) fn log_sum_exp(v: &[f64]) -> f64 {
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

fn softmax(v: &[f64]) -> Vec<f64> {
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = v.iter().map(|x| (x - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|x| x / s).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn p_data() -> GaussianMixture {
        GaussianMixture::two_mode(2, 0.5).unwrap()
    }

    fn p_bias() -> GaussianMixture {
        GaussianMixture::two_mode(2, 0.1).unwrap()
    }

    #[test]
    fn standard_normal_mode_density() {
        let gm = GaussianMixture::standard_normal(2);
        assert_relative_eq!(gm.density(&[0.0, 0.0]).unwrap(), 0.159_154_943_091_895_34, max_relative = 1e-14);
    }

    #[test]
    fn two_mode_densities_match_hand_sums() {
        // Both modes contribute (1/4pi) e^-4 at the origin.
        let expected = (-4.0f64).exp() / (2.0 * PI);
        assert_relative_eq!(p_data().density(&[0.0, 0.0]).unwrap(), expected, max_relative = 1e-13);
        assert_relative_eq!(expected, 2.9150e-3, max_relative = 1e-4);

        let expected = 0.9 / (2.0 * PI) + 0.1 * (-16.0f64).exp() / (2.0 * PI);
        assert_relative_eq!(p_bias().density(&[-2.0, -2.0]).unwrap(), expected, max_relative = 1e-13);
        assert_relative_eq!(expected, 0.143_240, max_relative = 1e-5);
    }

    #[test]
    fn dimension_mismatch_is_an_input_error() {
        assert!(matches!(
            p_data().density(&[0.0]),
            Err(Error::Dimension { expected: 2, got: 1 })
        ));
        assert!(p_data().score(&[0.0, 0.0, 0.0]).is_err());
        assert!(true_ratio(&p_data(), &GaussianMixture::standard_normal(1), &[0.0, 0.0]).is_err());
    }

    #[test]
    fn invalid_mixtures_are_rejected() {
        assert!(GaussianMixture::new(vec![]).is_err());
        assert!(GaussianMixture::two_mode(2, 0.0).is_err());
        let bad = MixtureSpec {
            weights: vec![0.5, 0.4],
            means: vec![vec![0.0], vec![1.0]],
            variances: vec![1.0, 1.0],
        };
        assert!(GaussianMixture::try_from(bad).is_err());
        let bad = MixtureSpec {
            weights: vec![1.0],
            means: vec![vec![0.0]],
            variances: vec![0.0],
        };
        assert!(GaussianMixture::try_from(bad).is_err());
    }

    #[test]
    fn score_at_gaussian_mode_and_symmetric_point_is_zero() {
        let g = GaussianMixture::gaussian(vec![1.5, -0.5], 2.0).unwrap();
        assert_eq!(g.score(&[1.5, -0.5]).unwrap(), vec![0.0, 0.0]);
        let s = g.score(&[0.0, 0.0]).unwrap();
        assert_relative_eq!(s[0], 0.75, max_relative = 1e-15);
        assert_relative_eq!(s[1], -0.25, max_relative = 1e-15);
        let s = p_data().score(&[0.0, 0.0]).unwrap();
        assert!(s[0].abs() < 1e-15 && s[1].abs() < 1e-15);
    }

    #[test]
    fn perturb_at_zero_is_identity_and_terminal_is_near_prior() {
        let sched = VpSchedule::default();
        assert_eq!(p_bias().perturb(&sched, 0.0).unwrap(), p_bias());
        let end = p_bias().perturb(&sched, 1.0).unwrap();
        for c in end.components() {
            assert!(c.mean.iter().all(|m| m.abs() < 0.02));
            assert!((c.variance - 1.0).abs() < 1e-4);
        }
        assert!(p_bias().perturb(&sched, 1.5).is_err());
        assert!(p_bias().perturb(&sched, -0.1).is_err());
    }

    #[test]
    fn true_ratio_on_figure_mixtures() {
        let r = true_ratio(&p_data(), &p_bias(), &[-2.0, -2.0]).unwrap();
        assert_relative_eq!(r, 0.5 / 0.9, max_relative = 1e-6);
        let r = true_ratio(&p_data(), &p_bias(), &[2.0, 2.0]).unwrap();
        assert_relative_eq!(r, 5.0, max_relative = 1e-5);
        assert_eq!(true_ratio(&p_bias(), &p_bias(), &[0.3, 7.0]).unwrap(), 1.0);
    }

    #[test]
    fn posterior_matches_hand_formula() {
        let post = p_data().posterior(&[2.0, 2.0]).unwrap();
        assert_relative_eq!(post[1], 1.0 / (1.0 + (-16.0f64).exp()), max_relative = 1e-15);
        let post = p_data().posterior(&[2.0, -2.0]).unwrap();
        assert_eq!(post, vec![0.5, 0.5]);
        assert_eq!(p_data().assign(&[2.0, -2.0]).unwrap(), 0);
    }

    #[test]
    fn sampling_is_deterministic_and_weighted() {
        let a = p_bias().sample(1000, 11).unwrap();
        let b = p_bias().sample(1000, 11).unwrap();
        assert_eq!(a, b);
        assert!(p_bias().sample(0, 1).is_err());

        let draws = p_bias().sample(100_000, 5).unwrap();
        let minority = draws
            .rows()
            .into_iter()
            .filter(|r| p_bias().assign(r.as_slice().unwrap()).unwrap() == 1)
            .count() as f64
            / 1e5;
        assert!((0.09..=0.11).contains(&minority), "{minority}");

        let z = GaussianMixture::standard_normal(2).sample(100_000, 3).unwrap();
        for m in z.mean_axis(ndarray::Axis(0)).unwrap() {
            assert!(m.abs() < 0.02);
        }
    }

    #[test]
    fn serde_round_trip_via_spec() {
        let text = toml::to_string(&p_bias()).unwrap();
        let back: GaussianMixture = toml::from_str(&text).unwrap();
        assert_eq!(back, p_bias());
        let err = toml::from_str::<GaussianMixture>("weights=[1.0]\nmeans=[[0.0]]\nvariances=[1.0]\ncolour=1");
        assert!(err.is_err());
    }

    fn arb_mixture() -> impl Strategy<Value = GaussianMixture> {
        (1usize..4, 1usize..4).prop_flat_map(|(k, d)| {
            (
                prop::collection::vec(0.1f64..1.0, k),
                prop::collection::vec(prop::collection::vec(-3.0f64..3.0, d), k),
                prop::collection::vec(0.2f64..3.0, k),
            )
                .prop_map(|(w, means, variances)| {
                    let s: f64 = w.iter().sum();
                    let mut weights: Vec<f64> = w.iter().map(|x| x / s).collect();
                    let head: f64 = weights[1..].iter().sum();
                    weights[0] = 1.0 - head;
                    GaussianMixture::try_from(MixtureSpec {
                        weights,
                        means,
                        variances,
                    })
                    .unwrap()
                })
        })
    }

    proptest! {
        #[test]
        fn score_is_gradient_of_log_density(gm in arb_mixture(), seed in 0u64..1000) {
            let x = gm.sample(1, seed).unwrap().row(0).to_vec();
            let s = gm.score(&x).unwrap();
            let h = 1e-5;
            for k in 0..gm.dim() {
                let mut xp = x.clone();
                let mut xm = x.clone();
                xp[k] += h;
                xm[k] -= h;
                let fd = (gm.log_density(&xp).unwrap() - gm.log_density(&xm).unwrap()) / (2.0 * h);
                let scale = s[k].abs().max(1e-2);
                prop_assert!((fd - s[k]).abs() / scale < 1e-6, "fd {} vs {}", fd, s[k]);
            }
        }

        #[test]
        fn posterior_is_a_distribution(gm in arb_mixture(), seed in 0u64..1000) {
            let x = gm.sample(1, seed).unwrap().row(0).to_vec();
            let p = gm.posterior(&x).unwrap();
            prop_assert!(p.iter().all(|v| (0.0..=1.0).contains(v)));
            prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }

        #[test]
        fn ratios_are_reciprocal(a in arb_mixture(), seed in 0u64..1000) {
            let b = a.scaled(0.8, 0.5);
            let x = a.sample(1, seed).unwrap().row(0).to_vec();
            let fwd = true_ratio(&a, &b, &x).unwrap();
            let bwd = true_ratio(&b, &a, &x).unwrap();
            prop_assert!((fwd * bwd - 1.0).abs() < 1e-12);
            prop_assert_eq!(true_ratio(&a, &a, &x).unwrap(), 1.0);
        }
    }
}
