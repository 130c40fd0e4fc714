//! Sample-set statistics: latent-mode proportions under an analytic
//! classifier, the latent-statistics bias metric and the energy distance.

use ndarray::{Array2, ArrayView2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::mixture::GaussianMixture;

fn nonempty(samples: &ArrayView2<f64>, what: &str) -> Result<()> {
    if samples.nrows() == 0 {
        return Err(Error::Input(format!("{what} sample set is empty")));
    }
    Ok(())
}

/// Mean posterior responsibility of each classifier component (soft
/// assignment). Sums to 1.
pub fn mode_proportions(samples: ArrayView2<f64>, classifier: &GaussianMixture) -> Result<Vec<f64>> {
    nonempty(&samples, "model")?;
    check_dim(classifier.dim(), samples.ncols())?;
    let k = classifier.components().len();
    let mut acc = vec![0.0; k];
    for row in samples.rows() {
        let post = classifier.posterior(&row.to_vec())?;
        for (a, p) in acc.iter_mut().zip(post) {
            *a += p;
        }
    }
    let n = samples.nrows() as f64;
    acc.iter_mut().for_each(|a| *a /= n);
    let total: f64 = acc.iter().sum();
    acc.iter_mut().for_each(|a| *a /= total);
    Ok(acc)
}

/// Fraction of samples whose most responsible component is each component
/// (ties go to the lower index).
pub fn mode_proportions_argmax(
    samples: ArrayView2<f64>,
    classifier: &GaussianMixture,
) -> Result<Vec<f64>> {
    nonempty(&samples, "model")?;
    check_dim(classifier.dim(), samples.ncols())?;
    let mut counts = vec![0usize; classifier.components().len()];
    for row in samples.rows() {
        counts[classifier.assign(&row.to_vec())?] += 1;
    }
    let n = samples.nrows() as f64;
    Ok(counts.into_iter().map(|c| c as f64 / n).collect())
}

/// `sum_z | mean_ref p(z|x) - mean_model p(z|x) |`.
pub fn bias_metric(
    samples_model: ArrayView2<f64>,
    samples_ref: ArrayView2<f64>,
    classifier: &GaussianMixture,
) -> Result<f64> {
    nonempty(&samples_ref, "reference")?;
    let pm = mode_proportions(samples_model, classifier)?;
    let pr = mode_proportions(samples_ref, classifier)?;
    Ok(pm.iter().zip(&pr).map(|(a, b)| (a - b).abs()).sum())
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Mean pairwise distance between the rows of `a` and `b`. With
/// `skip_diagonal`, pairs `(i, i)` are excluded and the mean is over
/// `n (m - 1)` pairs.
fn mean_pair_distance(a: &ArrayView2<f64>, b: &ArrayView2<f64>, skip_diagonal: bool) -> f64 {
    let rows_b: Vec<Vec<f64>> = b.rows().into_iter().map(|r| r.to_vec()).collect();
    let total: f64 = a
        .rows()
        .into_iter()
        .map(|r| r.to_vec())
        .collect::<Vec<_>>()
        .par_iter()
        .enumerate()
        .map(|(i, x)| {
            rows_b
                .iter()
                .enumerate()
                .filter(|(j, _)| !(skip_diagonal && *j == i))
                .map(|(_, y)| dist(x, y))
                .sum::<f64>()
        })
        .collect::<Vec<f64>>()
        .iter()
        .sum();
    let pairs = if skip_diagonal {
        a.nrows() * (b.nrows() - 1)
    } else {
        a.nrows() * b.nrows()
    };
    total / pairs as f64
}

/// Energy distance `2 E|X - Y| - E|X - X'| - E|Y - Y'|` with U-statistics
/// for the within-set terms.
///
/// Pairing convention: when both sets have the same number of rows the
/// cross term also excludes the matched pairs `(i, i)`, so `energy_distance(a, a)`
/// is exactly zero. Sets need at least two rows each.
pub fn energy_distance(a: ArrayView2<f64>, b: ArrayView2<f64>) -> Result<f64> {
    check_dim(a.ncols(), b.ncols())?;
    if a.nrows() < 2 || b.nrows() < 2 {
        return Err(Error::Input(
            "energy distance needs at least two samples per set".into(),
        ));
    }
    let matched = a.nrows() == b.nrows();
    let xy = 0.5 * (mean_pair_distance(&a, &b, matched) + mean_pair_distance(&b, &a, matched));
    let xx = mean_pair_distance(&a, &a, true);
    let yy = mean_pair_distance(&b, &b, true);
    Ok(2.0 * xy - xx - yy)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DreCurvePoint {
    pub t: f64,
    pub mse: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub bias: f64,
    pub proportions: Vec<f64>,
    pub proportions_argmax: Vec<f64>,
    pub energy_distance: f64,
    pub dre_curve: Vec<DreCurvePoint>,
    pub notes: String,
}

/// Evaluates `model` samples against `reference` samples drawn from the
/// target distribution, with `classifier` supplying the latent posterior.
pub fn evaluate(
    model: &Array2<f64>,
    reference: &Array2<f64>,
    classifier: &GaussianMixture,
) -> Result<EvalReport> {
    Ok(EvalReport {
        bias: bias_metric(model.view(), reference.view(), classifier)?,
        proportions: mode_proportions(model.view(), classifier)?,
        proportions_argmax: mode_proportions_argmax(model.view(), classifier)?,
        energy_distance: energy_distance(model.view(), reference.view())?,
        dre_curve: Vec::new(),
        notes: String::new(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use ndarray::array;

    #[test]
    fn identical_sets_have_zero_distance_and_bias() {
        let gm = GaussianMixture::two_mode(2, 0.5).unwrap();
        let a = gm.sample(300, 1).unwrap();
        assert_eq!(energy_distance(a.view(), a.view()).unwrap(), 0.0);
        assert_eq!(bias_metric(a.view(), a.view(), &gm).unwrap(), 0.0);
    }

    #[test]
    fn point_masses_at_distance_d() {
        let a = array![[0.0, 0.0], [0.0, 0.0], [0.0, 0.0]];
        let b = array![[3.0, 4.0], [3.0, 4.0]];
        assert_relative_eq!(energy_distance(a.view(), b.view()).unwrap(), 10.0, max_relative = 1e-15);
        let b3 = array![[3.0, 4.0], [3.0, 4.0], [3.0, 4.0]];
        assert_relative_eq!(energy_distance(a.view(), b3.view()).unwrap(), 10.0, max_relative = 1e-15);
    }

    #[test]
    fn energy_distance_is_symmetric() {
        let gm = GaussianMixture::two_mode(2, 0.3).unwrap();
        let a = gm.sample(120, 2).unwrap();
        let b = gm.sample(90, 3).unwrap();
        assert_eq!(
            energy_distance(a.view(), b.view()).unwrap(),
            energy_distance(b.view(), a.view()).unwrap()
        );
    }

    #[test]
    fn single_point_at_a_mode_is_one_hot() {
        let gm = GaussianMixture::two_mode(2, 0.5).unwrap();
        let p = mode_proportions(array![[2.0, 2.0]].view(), &gm).unwrap();
        assert!(p[0] < 1e-6 && (p[1] - 1.0).abs() < 1e-6);
    }

    #[test]
    fn hand_bias_value() {
        let gm = GaussianMixture::two_mode(2, 0.5).unwrap();
        let model = array![[2.0, 2.0], [2.0, 2.0]];
        let reference = array![[-2.0, -2.0], [2.0, 2.0]];
        let b = bias_metric(model.view(), reference.view(), &gm).unwrap();
        assert_relative_eq!(b, 1.0, max_relative = 1e-6);
        assert_eq!(b, bias_metric(reference.view(), model.view(), &gm).unwrap());
    }

    #[test]
    fn errors() {
        let gm = GaussianMixture::two_mode(2, 0.5).unwrap();
        let empty = Array2::<f64>::zeros((0, 2));
        assert!(matches!(mode_proportions(empty.view(), &gm), Err(Error::Input(_))));
        let one = Array2::<f64>::zeros((3, 1));
        let two = Array2::<f64>::zeros((3, 2));
        assert!(energy_distance(one.view(), two.view()).is_err());
    }
}
