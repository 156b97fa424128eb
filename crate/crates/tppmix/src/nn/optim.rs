//! First-order parameter updates.
//!
//! The adaptive method keeps per-entry first/second moment estimates with
//! bias correction; plain gradient descent is available for tests and
//! analytically transparent updates. Gradients are clipped at a global norm
//! before each step and cleared afterwards.

use serde::{Deserialize, Serialize};

use super::param::ParamSet;

/// Update rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    /// `value -= lr * grad`.
    Sgd,
    /// Adaptive moments with bias correction.
    #[default]
    Adam,
}

/// Settings for [`optimizer_step`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Global-norm clip applied before the update; `None` disables clipping.
    pub clip_norm: Option<f64>,
    pub method: Method,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            clip_norm: Some(5.0),
            method: Method::Adam,
        }
    }
}

impl OptimizerConfig {
    pub fn with_learning_rate(lr: f64) -> Self {
        Self { learning_rate: lr, ..Self::default() }
    }

    pub fn sgd(lr: f64) -> Self {
        Self { learning_rate: lr, method: Method::Sgd, clip_norm: None, ..Self::default() }
    }

    pub fn validate(&self) -> Result<(), String> {
        if !(self.learning_rate > 0.0) {
            return Err(format!("learning rate must be positive, got {}", self.learning_rate));
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&b) {
                return Err(format!("{name} must lie in (0,1), got {b}"));
            }
        }
        if !(self.epsilon > 0.0) {
            return Err(format!("epsilon must be positive, got {}", self.epsilon));
        }
        Ok(())
    }
}

/// Applies one update to every parameter and clears the gradients.
pub fn optimizer_step(params: &mut ParamSet, cfg: &OptimizerConfig) {
    if let Some(max_norm) = cfg.clip_norm {
        let norm = params.grad_norm();
        if norm > max_norm {
            let scale = max_norm / norm;
            for p in params.iter_mut() {
                for g in &mut p.grad {
                    *g *= scale;
                }
            }
        }
    }

    params.step += 1;
    let t = params.step as i32;
    match cfg.method {
        Method::Sgd => {
            for p in params.iter_mut() {
                for (v, g) in p.value.iter_mut().zip(&p.grad) {
                    *v -= cfg.learning_rate * g;
                }
            }
        }
        Method::Adam => {
            let bc1 = 1.0 - cfg.beta1.powi(t);
            let bc2 = 1.0 - cfg.beta2.powi(t);
            for p in params.iter_mut() {
                for i in 0..p.value.len() {
                    let g = p.grad[i];
                    p.moment1[i] = cfg.beta1 * p.moment1[i] + (1.0 - cfg.beta1) * g;
                    p.moment2[i] = cfg.beta2 * p.moment2[i] + (1.0 - cfg.beta2) * g * g;
                    let m_hat = p.moment1[i] / bc1;
                    let v_hat = p.moment2[i] / bc2;
                    p.value[i] -= cfg.learning_rate * m_hat / (v_hat.sqrt() + cfg.epsilon);
                }
            }
        }
    }

    params.zero_grads();
}
