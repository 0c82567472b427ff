use ndarray::{Array, Dimension, Zip};
use serde::{Deserialize, Serialize};

use crate::error::{check_shape, CwmiError, Result};
use crate::scalar::Scalar;

/// Adam hyperparameters with a step-decay learning-rate schedule.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Learning rate multiplier applied every `decay_every` scheduler steps.
    pub decay: f64,
    pub decay_every: u64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            decay: 0.8,
            decay_every: 10,
        }
    }
}

impl AdamConfig {
    pub fn with_learning_rate(learning_rate: f64) -> Self {
        Self {
            learning_rate,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.learning_rate > 0.0
            && (0.0..1.0).contains(&self.beta1)
            && (0.0..1.0).contains(&self.beta2)
            && self.epsilon > 0.0
            && self.decay > 0.0
            && self.decay <= 1.0
            && self.decay_every > 0;
        if ok {
            Ok(())
        } else {
            Err(CwmiError::InvalidConfig(format!("invalid optimizer settings {self:?}")))
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct OptimState<T: Scalar, D: Dimension> {
    pub first_moment: Array<T, D>,
    pub second_moment: Array<T, D>,
    /// Optimizer steps taken.
    pub step: u64,
    /// Scheduler steps taken.
    pub scheduler_step: u64,
}

impl<T: Scalar, D: Dimension> OptimState<T, D> {
    pub fn new(shape: D) -> Self {
        Self {
            first_moment: Array::zeros(shape.clone()),
            second_moment: Array::zeros(shape),
            step: 0,
            scheduler_step: 0,
        }
    }

    /// Current learning rate under the step-decay schedule.
    pub fn learning_rate(&self, hyper: &AdamConfig) -> f64 {
        hyper.learning_rate * hyper.decay.powi((self.scheduler_step / hyper.decay_every) as i32)
    }

    pub fn scheduler_step(&mut self) {
        self.scheduler_step += 1;
    }
}

/// One bias-corrected Adam update of `params` in place.
pub fn adam_step<T: Scalar, D: Dimension>(
    params: &mut Array<T, D>,
    gradient: &Array<T, D>,
    state: &mut OptimState<T, D>,
    hyper: &AdamConfig,
) -> Result<()> {
    check_shape(params.shape(), gradient.shape())?;
    check_shape(params.shape(), state.first_moment.shape())?;
    if gradient.iter().any(|g| !g.is_finite()) {
        return Err(CwmiError::NonFiniteGradient);
    }
    state.step += 1;
    let (b1, b2) = (T::lit(hyper.beta1), T::lit(hyper.beta2));
    let t = state.step as i32;
    let c1 = T::one() - b1.powi(t);
    let c2 = T::one() - b2.powi(t);
    let lr = T::lit(state.learning_rate(hyper));
    let eps = T::lit(hyper.epsilon);
    Zip::from(params)
        .and(gradient)
        .and(&mut state.first_moment)
        .and(&mut state.second_moment)
        .for_each(|p, &g, m, v| {
            *m = b1 * *m + (T::one() - b1) * g;
            *v = b2 * *v + (T::one() - b2) * g * g;
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            *p = *p - lr * m_hat / (v_hat.sqrt() + eps);
        });
    Ok(())
}
