use serde::{Deserialize, Serialize};

use super::ModelParams;
use crate::error::{IprError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdamWConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub weight_decay: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-5,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            weight_decay: 0.01,
        }
    }
}

impl AdamWConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return Err(IprError::config("learning_rate", "must be positive"));
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&b) {
                return Err(IprError::config(name, "must lie in [0, 1)"));
            }
        }
        if !(self.epsilon > 0.0) {
            return Err(IprError::config("epsilon", "must be positive"));
        }
        if !(self.weight_decay >= 0.0) {
            return Err(IprError::config("weight_decay", "must be non-negative"));
        }
        Ok(())
    }
}

/// Adam with decoupled weight decay.
///
/// Per parameter θ with gradient g at step t:
///
/// ```text
/// θ ← θ · (1 − lr·λ)
/// m ← β₁ m + (1 − β₁) g
/// v ← β₂ v + (1 − β₂) g²
/// θ ← θ − lr · m̂ / (√v̂ + ε),   m̂ = m / (1 − β₁ᵗ),  v̂ = v / (1 − β₂ᵗ)
/// ```
#[derive(Debug, Clone, PartialEq)]
pub struct AdamW {
    pub config: AdamWConfig,
    step: u64,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
}

impl AdamW {
    pub fn new(config: AdamWConfig, params: &ModelParams) -> Self {
        let shapes: Vec<usize> = params.tensors().iter().map(|(_, t)| t.len()).collect();
        Self {
            config,
            step: 0,
            first: shapes.iter().map(|&n| vec![0.0; n]).collect(),
            second: shapes.iter().map(|&n| vec![0.0; n]).collect(),
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// Applies one update. Non-finite gradients reject the whole step and
    /// leave both the parameters and the moments untouched.
    pub fn step(&mut self, params: &mut ModelParams, grads: &ModelParams) -> Result<()> {
        let grad_tensors = grads.tensors();
        if grad_tensors.len() != self.first.len() {
            return Err(IprError::Usage("gradient layout does not match optimizer state".into()));
        }
        for (name, g) in &grad_tensors {
            if let Some(i) = g.iter().position(|v| !v.is_finite()) {
                return Err(IprError::NonFinite(format!("gradient of {name}[{i}]")));
            }
        }

        self.step += 1;
        let c = self.config;
        let t = self.step as f64;
        let bias1 = 1.0 - c.beta1.powf(t);
        let bias2 = 1.0 - c.beta2.powf(t);
        let decay = 1.0 - c.learning_rate * c.weight_decay;

        for (idx, (_, theta)) in params.tensors_mut().into_iter().enumerate() {
            let g = grad_tensors[idx].1;
            let m = &mut self.first[idx];
            let v = &mut self.second[idx];
            for j in 0..theta.len() {
                m[j] = c.beta1 * m[j] + (1.0 - c.beta1) * g[j];
                v[j] = c.beta2 * v[j] + (1.0 - c.beta2) * g[j] * g[j];
                let m_hat = m[j] / bias1;
                let v_hat = v[j] / bias2;
                theta[j] = theta[j] * decay - c.learning_rate * m_hat / (v_hat.sqrt() + c.epsilon);
            }
        }
        Ok(())
    }
}
