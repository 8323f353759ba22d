//! SGD with momentum, weight decay, and the cosine learning-rate schedule.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

use super::Network;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LrSchedule {
    Constant,
    /// Per-step cosine decay from the base rate to zero over the planned
    /// step count.
    CosineToZero,
}

/// Hyperparameters of one training run.
#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub lr_schedule: LrSchedule,
    pub augment: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.1,
            batch_size: 128,
            epochs: 1,
            seed: 0,
            momentum: 0.9,
            weight_decay: 5e-4,
            lr_schedule: LrSchedule::CosineToZero,
            augment: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.learning_rate <= 0.0 {
            return Err(Error::InvalidConfig("learning_rate must be positive".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidConfig("batch_size must be >= 1".into()));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::InvalidConfig("momentum must be in [0, 1)".into()));
        }
        if self.weight_decay < 0.0 {
            return Err(Error::InvalidConfig("weight_decay must be nonnegative".into()));
        }
        Ok(())
    }

    /// Learning rate for global step `step` of `total_steps`.
    pub fn lr_at(&self, step: usize, total_steps: usize) -> f64 {
        match self.lr_schedule {
            LrSchedule::Constant => self.learning_rate,
            LrSchedule::CosineToZero => {
                if total_steps == 0 {
                    return self.learning_rate;
                }
                let t = (step.min(total_steps)) as f64 / total_steps as f64;
                0.5 * self.learning_rate * (1.0 + (std::f64::consts::PI * t).cos())
            }
        }
    }
}

/// Momentum-SGD state: one velocity tensor per parameter path.
#[derive(Debug, Default)]
pub struct Sgd<T> {
    velocities: HashMap<String, Tensor<T>>,
}

impl<T: Scalar> Sgd<T> {
    pub fn new() -> Self {
        Sgd { velocities: HashMap::new() }
    }

    /// One update: `v ← momentum·v + grad + weight_decay·param`,
    /// `param ← param − lr·v`.
    pub fn step(&mut self, network: &mut Network<T>, config: &TrainConfig, lr: f64) -> Result<()> {
        let lr = T::from_f64(lr);
        let momentum = T::from_f64(config.momentum);
        let weight_decay = T::from_f64(config.weight_decay);
        let velocities = &mut self.velocities;
        network.visit_params(&mut |path, param| {
            if !param.grad.is_all_finite() {
                return Err(Error::Divergence { layer: path.to_string() });
            }
            let velocity = velocities
                .entry(path.to_string())
                .or_insert_with(|| Tensor::zeros(param.value.shape().to_vec()).expect("velocity"));
            for ((v, &g), p) in velocity
                .data_mut()
                .iter_mut()
                .zip(param.grad.data().iter())
                .zip(param.value.data().iter())
            {
                *v = momentum * *v + g + weight_decay * *p;
            }
            for (p, &v) in param.value.data_mut().iter_mut().zip(velocity.data().iter()) {
                *p = *p - lr * v;
            }
            Ok(())
        })
    }
}
