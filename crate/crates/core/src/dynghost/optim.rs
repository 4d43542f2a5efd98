use serde::{Deserialize, Serialize};

use crate::error::{GhostError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdamWConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        AdamWConfig {
            lr: 3e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 1e-3,
        }
    }
}

impl AdamWConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.lr >= 0.0
            && (0.0..1.0).contains(&self.beta1)
            && (0.0..1.0).contains(&self.beta2)
            && self.eps > 0.0
            && self.weight_decay >= 0.0
            && [self.lr, self.eps, self.weight_decay].iter().all(|v| v.is_finite());
        if ok {
            Ok(())
        } else {
            Err(GhostError::Config(format!("invalid optimizer settings {self:?}")))
        }
    }
}

/// Adam with decoupled weight decay.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamWState {
    pub config: AdamWConfig,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub step: u64,
}

impl AdamWState {
    pub fn new(len: usize, config: AdamWConfig) -> Result<Self> {
        config.validate()?;
        Ok(AdamWState {
            config,
            m: vec![0.0; len],
            v: vec![0.0; len],
            step: 0,
        })
    }

    /// `theta <- theta (1 - lr wd) - lr m_hat / (sqrt(v_hat) + eps)`
    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(GhostError::Dimension(format!(
                "optimizer holds {} moments, got {} params and {} grads",
                self.m.len(),
                params.len(),
                grads.len()
            )));
        }
        self.step += 1;
        let c = self.config;
        let bc1 = 1.0 - c.beta1.powi(self.step as i32);
        let bc2 = 1.0 - c.beta2.powi(self.step as i32);
        let decay = 1.0 - c.lr * c.weight_decay;
        for k in 0..params.len() {
            let g = grads[k];
            self.m[k] = c.beta1 * self.m[k] + (1.0 - c.beta1) * g;
            self.v[k] = c.beta2 * self.v[k] + (1.0 - c.beta2) * g * g;
            let m_hat = self.m[k] / bc1;
            let v_hat = self.v[k] / bc2;
            params[k] = params[k] * decay - c.lr * m_hat / (v_hat.sqrt() + c.eps);
        }
        Ok(())
    }
}
