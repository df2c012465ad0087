use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Bias-corrected Adam. Moments are kept in 32-bit, the update arithmetic
/// runs in 64-bit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    #[serde(skip)]
    m: Vec<f32>,
    #[serde(skip)]
    v: Vec<f32>,
}

impl Adam {
    pub fn new(lr: f64, param_count: usize) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: vec![0.0; param_count],
            v: vec![0.0; param_count],
        }
    }

    /// Rebuilds an optimizer from saved moments.
    pub fn from_state(lr: f64, step: u64, m: Vec<f32>, v: Vec<f32>) -> Result<Self> {
        if m.len() != v.len() {
            return Err(Error::PayloadLength {
                expected: m.len(),
                found: v.len(),
            });
        }
        Ok(Self {
            step,
            m,
            v,
            ..Self::new(lr, 0)
        })
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn first_moment(&self) -> &[f32] {
        &self.m
    }

    pub fn second_moment(&self) -> &[f32] {
        &self.v
    }

    /// Applies one update in place. Nothing is modified if any gradient is
    /// non-finite.
    pub fn update(&mut self, params: &mut [f32], grads: &[f32]) -> Result<()> {
        if params.len() != grads.len() || params.len() != self.m.len() {
            return Err(Error::Shape(format!(
                "adam: {} params, {} grads, {} moments",
                params.len(),
                grads.len(),
                self.m.len()
            )));
        }
        if let Some(index) = grads.iter().position(|g| !g.is_finite()) {
            return Err(Error::NonFiniteGradient { index });
        }
        self.step += 1;
        let k = self.step as i32;
        let bc1 = 1.0 - self.beta1.powi(k);
        let bc2 = 1.0 - self.beta2.powi(k);
        for (((p, &g), m), v) in params
            .iter_mut()
            .zip(grads)
            .zip(self.m.iter_mut())
            .zip(self.v.iter_mut())
        {
            let g = g as f64;
            let m1 = self.beta1 * *m as f64 + (1.0 - self.beta1) * g;
            let v1 = self.beta2 * *v as f64 + (1.0 - self.beta2) * g * g;
            *m = m1 as f32;
            *v = v1 as f32;
            let m_hat = m1 / bc1;
            let v_hat = v1 / bc2;
            *p = (*p as f64 - self.lr * m_hat / (v_hat.sqrt() + self.eps)) as f32;
        }
        Ok(())
    }
}
