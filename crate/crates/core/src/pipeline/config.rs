use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{Adam, INIT_STD};

/// Optimization settings shared by both training stages.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    pub lr: f64,
    pub lr_step: usize,
    pub lr_gamma: f64,
    pub init_std: f64,
    /// Weight of `1 − SSIM` in the generator loss.
    pub alpha: f64,
    /// Weight of the period term in the generator loss.
    pub beta: f64,
    pub seed: u64,
    /// Train on all four rotations of every record.
    pub augment: bool,
}

impl TrainConfig {
    /// Simulator settings at full scale.
    pub fn simulator_full() -> Self {
        TrainConfig {
            epochs: 500,
            batch_size: 1024,
            beta1: 0.5,
            beta2: 0.999,
            adam_eps: 1e-8,
            lr: 0.02,
            lr_step: 100,
            lr_gamma: 0.5,
            init_std: INIT_STD,
            alpha: 0.0,
            beta: 0.0,
            seed: 0,
            augment: true,
        }
    }

    pub fn generator_full() -> Self {
        TrainConfig { epochs: 1000, batch_size: 256, lr_step: 200, alpha: 0.05, augment: false, ..Self::simulator_full() }
    }

    pub fn simulator_desk() -> Self {
        TrainConfig { epochs: 60, batch_size: 128, ..Self::simulator_full() }
    }

    pub fn generator_desk() -> Self {
        TrainConfig { epochs: 120, batch_size: 64, ..Self::generator_full() }
    }

    pub fn adam(&self) -> Adam {
        Adam { beta1: self.beta1, beta2: self.beta2, eps: self.adam_eps }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(m.to_owned()));
        if self.epochs == 0 || self.batch_size == 0 || self.lr_step == 0 {
            return bad("epochs, batch size and lr step must be positive");
        }
        if !(self.alpha >= 0.0 && self.beta >= 0.0) {
            return bad("loss weights must be non-negative");
        }
        if !(self.lr > 0.0 && self.lr_gamma > 0.0 && self.init_std > 0.0 && self.adam_eps > 0.0) {
            return bad("learning rate, gamma, init std and epsilon must be positive");
        }
        if !((0.0..1.0).contains(&self.beta1) && (0.0..1.0).contains(&self.beta2)) {
            return bad("Adam betas must lie in [0, 1)");
        }
        Ok(())
    }
}
