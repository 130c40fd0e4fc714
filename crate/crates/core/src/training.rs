use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{AdamConfig, NetArch};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LrSchedule {
    Constant,
    /// Cosine decay from the base rate to 1 % of it over the run.
    Cosine,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub arch: NetArch,
    pub steps: usize,
    pub batch_size: usize,
    pub adam: AdamConfig,
    pub lr_schedule: LrSchedule,
    pub seed: u64,
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.arch.validate()?;
        if self.steps == 0 || self.batch_size < 2 {
            return Err(Error::Input(format!(
                "need steps >= 1 and batch_size >= 2, got {} and {}",
                self.steps, self.batch_size
            )));
        }
        if !(self.adam.learning_rate > 0.0) {
            return Err(Error::Input("learning rate must be positive".into()));
        }
        Ok(())
    }

    pub fn learning_rate(&self, step: usize) -> f64 {
        let base = self.adam.learning_rate;
        match self.lr_schedule {
            LrSchedule::Constant => base,
            LrSchedule::Cosine => {
                let frac = step as f64 / self.steps.max(1) as f64;
                let floor = 0.01 * base;
                floor + 0.5 * (base - floor) * (1.0 + (std::f64::consts::PI * frac).cos())
            }
        }
    }
}
