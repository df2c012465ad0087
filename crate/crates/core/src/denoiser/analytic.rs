use std::sync::Arc;

use super::Denoiser;
use crate::diffusion::NoiseSchedule;
use crate::error::{Error, Result};
use crate::tensor::Field;

/// Exact posterior mean `E[x0 | x_t]` when every coefficient of `x0` is
/// i.i.d. `N(mu0, var0)`.
#[derive(Debug, Clone)]
pub struct AnalyticGaussianDenoiser {
    pub mu0: f64,
    pub var0: f64,
    sched: Arc<NoiseSchedule>,
}

impl AnalyticGaussianDenoiser {
    pub fn new(mu0: f64, var0: f64, sched: Arc<NoiseSchedule>) -> Result<Self> {
        if !(var0 > 0.0 && var0.is_finite() && mu0.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "analytic denoiser needs finite mu0 and var0 > 0, got {mu0}, {var0}"
            )));
        }
        Ok(Self { mu0, var0, sched })
    }

    /// `(√ᾱ·var0·x_t + (1 − ᾱ)·mu0) / (ᾱ·var0 + 1 − ᾱ)` for a given ᾱ.
    pub fn posterior_mean_scalar(&self, x_t: f64, alpha_bar: f64) -> f64 {
        (alpha_bar.sqrt() * self.var0 * x_t + (1.0 - alpha_bar) * self.mu0)
            / (alpha_bar * self.var0 + 1.0 - alpha_bar)
    }

    pub fn schedule(&self) -> &NoiseSchedule {
        &self.sched
    }
}

impl Denoiser for AnalyticGaussianDenoiser {
    fn predict(&self, x_t: &Field<f32>, t: usize) -> Result<Field<f32>> {
        self.sched.check_t(t)?;
        let ab = self.sched.alpha_bar(t);
        Ok(x_t.map(|v| self.posterior_mean_scalar(v as f64, ab) as f32))
    }
}
