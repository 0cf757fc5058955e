//! Adam optimizer with bias correction over the flat parameter vector.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::CoreError;
use crate::math;
use crate::Result;

/// Optimizer hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct OptimizerConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub batch_size: usize,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            learning_rate: 0.05,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            batch_size: 512,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.beta1 > 0.0 && self.beta1 < self.beta2 && self.beta2 < 1.0) {
            return Err(CoreError::InvalidConfig(alloc::format!(
                "need 0 < beta1 < beta2 < 1, got beta1={} beta2={}",
                self.beta1,
                self.beta2
            )));
        }
        if self.learning_rate <= 0.0 || self.epsilon <= 0.0 || self.batch_size == 0 {
            return Err(CoreError::InvalidConfig(alloc::format!(
                "need positive learning_rate/epsilon/batch_size, got {}/{}/{}",
                self.learning_rate,
                self.epsilon,
                self.batch_size
            )));
        }
        Ok(())
    }
}

/// First/second moment estimates plus the step counter.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl AdamState {
    pub fn new(n_params: usize) -> Self {
        AdamState {
            m: vec![0.0; n_params],
            v: vec![0.0; n_params],
            t: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.t
    }
}

/// One Adam update in place. Advances the state's step counter.
pub fn adam_step(
    params: &mut [f64],
    grads: &[f64],
    state: &mut AdamState,
    cfg: &OptimizerConfig,
) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.m.len() {
        return Err(CoreError::DimensionMismatch(alloc::format!(
            "adam_step: params {} grads {} state {}",
            params.len(),
            grads.len(),
            state.m.len()
        )));
    }
    state.t += 1;
    let t = state.t as i32;
    let bias1 = 1.0 - math::powi(cfg.beta1, t);
    let bias2 = 1.0 - math::powi(cfg.beta2, t);
    for k in 0..params.len() {
        let g = grads[k];
        state.m[k] = cfg.beta1 * state.m[k] + (1.0 - cfg.beta1) * g;
        state.v[k] = cfg.beta2 * state.v[k] + (1.0 - cfg.beta2) * g * g;
        let m_hat = state.m[k] / bias1;
        let v_hat = state.v[k] / bias2;
        params[k] -= cfg.learning_rate * m_hat / (math::sqrt(v_hat) + cfg.epsilon);
    }
    Ok(())
}
