//! Adaptive-moment optimizer with decoupled weight decay.
//!
//! The update is the usual bias-corrected first/second moment step, with
//! weight decay applied directly to the parameter (`p -= lr * wd * p`)
//! rather than folded into the gradient, so decay strength is independent
//! of the adaptive scaling.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Per-parameter moment accumulators plus the step counter. Moment shapes
/// are fixed on the first step and verified afterwards.
#[derive(Debug, Clone)]
pub struct OptimizerState {
    config: AdamConfig,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    step: u64,
}

impl OptimizerState {
    pub fn new(config: AdamConfig) -> Self {
        OptimizerState {
            config,
            m: Vec::new(),
            v: Vec::new(),
            step: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// Applies one update to every `(parameter, gradient)` pair.
    pub fn step(
        &mut self,
        params: &mut [(&mut [f64], &[f64])],
        lr: f64,
        weight_decay: f64,
    ) -> Result<()> {
        if self.m.is_empty() {
            self.m = params.iter().map(|(p, _)| vec![0.0; p.len()]).collect();
            self.v = self.m.clone();
        }
        if self.m.len() != params.len() {
            return Err(Error::Shape(format!(
                "optimizer state tracks {} parameter groups, got {}",
                self.m.len(),
                params.len()
            )));
        }
        self.step += 1;
        let t = self.step as i32;
        let c = self.config;
        let bc1 = 1.0 - c.beta1.powi(t);
        let bc2 = 1.0 - c.beta2.powi(t);
        for (i, (param, grad)) in params.iter_mut().enumerate() {
            if param.len() != grad.len() || param.len() != self.m[i].len() {
                return Err(Error::Shape(format!(
                    "parameter group {i}: param {} / grad {} / moments {}",
                    param.len(),
                    grad.len(),
                    self.m[i].len()
                )));
            }
            let m = &mut self.m[i];
            let v = &mut self.v[i];
            for j in 0..param.len() {
                let g = grad[j];
                m[j] = c.beta1 * m[j] + (1.0 - c.beta1) * g;
                v[j] = c.beta2 * v[j] + (1.0 - c.beta2) * g * g;
                let m_hat = m[j] / bc1;
                let v_hat = v[j] / bc2;
                param[j] -= lr * weight_decay * param[j];
                param[j] -= lr * m_hat / (v_hat.sqrt() + c.epsilon);
            }
        }
        Ok(())
    }
}
