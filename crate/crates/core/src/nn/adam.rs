use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimState {
    pub step: u64,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub config: AdamConfig,
}

impl OptimState {
    pub fn new(num_params: usize, config: AdamConfig) -> Self {
        Self {
            step: 0,
            m: vec![0.0; num_params],
            v: vec![0.0; num_params],
            config,
        }
    }
}

/// One bias-corrected Adam update of `params` in place.
pub fn adam_step(params: &mut [f64], grads: &[f64], state: &mut OptimState) -> Result<()> {
    adam_step_with_lr(params, grads, state, state.config.learning_rate)
}

/// As [`adam_step`] with an explicit learning rate (for schedules).
pub fn adam_step_with_lr(
    params: &mut [f64],
    grads: &[f64],
    state: &mut OptimState,
    lr: f64,
) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.m.len() {
        return Err(Error::Contract(format!(
            "adam: {} params, {} grads, {} moments",
            params.len(),
            grads.len(),
            state.m.len()
        )));
    }
    state.step += 1;
    let AdamConfig {
        beta1, beta2, eps, ..
    } = state.config;
    let c1 = 1.0 - beta1.powi(state.step as i32);
    let c2 = 1.0 - beta2.powi(state.step as i32);
    for ((p, g), (m, v)) in params
        .iter_mut()
        .zip(grads)
        .zip(state.m.iter_mut().zip(state.v.iter_mut()))
    {
        *m = beta1 * *m + (1.0 - beta1) * g;
        *v = beta2 * *v + (1.0 - beta2) * g * g;
        let m_hat = *m / c1;
        let v_hat = *v / c2;
        *p -= lr * m_hat / (v_hat.sqrt() + eps);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng as _;

    #[test]
    fn zero_gradient_leaves_params() {
        let mut p = vec![0.3, -1.0];
        let mut s = OptimState::new(2, AdamConfig::default());
        adam_step(&mut p, &[0.0, 0.0], &mut s).unwrap();
        assert_eq!(p, vec![0.3, -1.0]);
        assert_eq!(s.step, 1);
    }

    #[test]
    fn constant_gradient_moves_by_learning_rate() {
        let cfg = AdamConfig::default();
        let mut p = vec![0.0, 0.0];
        let mut s = OptimState::new(2, cfg);
        let mut prev = p.clone();
        for _ in 0..500 {
            prev.clone_from(&p);
            adam_step(&mut p, &[3.0, -0.01], &mut s).unwrap();
        }
        assert!(((prev[0] - p[0]) - cfg.learning_rate).abs() < 1e-6);
        assert!(((p[1] - prev[1]) - cfg.learning_rate).abs() < 1e-5);
    }

    #[test]
    fn quadratic_bowl_converges() {
        let mut rng = crate::rng::rng(17);
        for _ in 0..10 {
            let mut p: Vec<f64> = (0..4).map(|_| rng.random_range(-0.5..0.5)).collect();
            let mut s = OptimState::new(
                4,
                AdamConfig {
                    learning_rate: 1e-2,
                    ..Default::default()
                },
            );
            for _ in 0..5000 {
                let g = p.clone();
                adam_step(&mut p, &g, &mut s).unwrap();
            }
            let norm = p.iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!(norm < 1e-4, "norm {norm}");
        }
    }

    #[test]
    fn length_mismatch_is_contract_error() {
        let mut p = vec![0.0; 3];
        let mut s = OptimState::new(3, AdamConfig::default());
        assert!(matches!(
            adam_step(&mut p, &[1.0], &mut s),
            Err(Error::Contract(_))
        ));
    }
}
