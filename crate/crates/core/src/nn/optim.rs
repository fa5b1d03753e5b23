//! Plain gradient descent with a step-wise learning-rate schedule.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::Tensor;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SgdSchedule {
    pub initial_lr: f64,
    /// `(step, lr)` pairs: from `step` on, the rate is `lr`.
    pub drops: Vec<(usize, f64)>,
    pub total_steps: usize,
    /// Weight on the positive-class term of the loss.
    pub pos_weight: f64,
}

impl Default for SgdSchedule {
    /// 0.01, dropping to 0.003 at step 5000 and 0.001 at step 10000, for
    /// 11500 steps with positive weight 3.
    fn default() -> Self {
        SgdSchedule {
            initial_lr: 0.01,
            drops: vec![(5000, 0.003), (10000, 0.001)],
            total_steps: 11500,
            pos_weight: 3.0,
        }
    }
}

impl SgdSchedule {
    pub fn validate(&self) -> Result<()> {
        let positive = |v: f64| v.is_finite() && v > 0.0;
        if !positive(self.initial_lr) {
            return Err(Error::InvalidConfig(format!(
                "initial learning rate must be positive, got {}",
                self.initial_lr
            )));
        }
        for pair in self.drops.windows(2) {
            if pair[1].0 <= pair[0].0 {
                return Err(Error::InvalidConfig(
                    "learning-rate drop steps must be strictly increasing".into(),
                ));
            }
        }
        if let Some(&(step, lr)) = self.drops.iter().find(|&&(_, lr)| !positive(lr)) {
            return Err(Error::InvalidConfig(format!(
                "learning rate at step {step} must be positive, got {lr}"
            )));
        }
        if !(self.pos_weight.is_finite() && self.pos_weight >= 0.0) {
            return Err(Error::InvalidConfig(format!(
                "pos_weight must be non-negative, got {}",
                self.pos_weight
            )));
        }
        Ok(())
    }

    /// Learning rate in effect at `step` (0-based).
    pub fn lr(&self, step: usize) -> f64 {
        self.drops
            .iter()
            .take_while(|&&(at, _)| step >= at)
            .last()
            .map_or(self.initial_lr, |&(_, lr)| lr)
    }
}

/// `p <- p - lr(step) * g` for every parameter. Nothing is updated if any
/// gradient is non-finite. Returns the rate used.
pub fn sgd_step(params: &mut [&mut Tensor], grads: &[Tensor], schedule: &SgdSchedule, step: usize) -> Result<f64> {
    if params.len() != grads.len() {
        return Err(Error::Shape(format!(
            "{} parameters but {} gradients",
            params.len(),
            grads.len()
        )));
    }
    for (k, (p, g)) in params.iter().zip(grads).enumerate() {
        if p.shape() != g.shape() {
            return Err(Error::Shape(format!(
                "parameter {k} is {:?} but its gradient is {:?}",
                p.shape(),
                g.shape()
            )));
        }
        if !g.is_finite() {
            return Err(Error::NonFiniteGradient { param: k });
        }
    }
    let lr = schedule.lr(step);
    for (p, g) in params.iter_mut().zip(grads) {
        for (v, &d) in p.data_mut().iter_mut().zip(g.data()) {
            *v -= lr * d;
        }
    }
    Ok(lr)
}
