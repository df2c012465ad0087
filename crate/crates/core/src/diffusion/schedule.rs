use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Precomputed β, α, ᾱ and posterior tables for `T` steps, all in f64.
///
/// Timesteps are 1-based; `alpha_bar(0)` is defined as 1 so the final
/// reverse step is deterministic.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NoiseSchedule {
    name: String,
    betas: Vec<f64>,
    alphas: Vec<f64>,
    alpha_bars: Vec<f64>,
    sqrt_alpha_bars: Vec<f64>,
    sqrt_one_minus_alpha_bars: Vec<f64>,
    posterior_variances: Vec<f64>,
}

impl NoiseSchedule {
    /// β linearly spaced from `beta1` to `beta_t` over `steps` steps.
    pub fn linear(steps: usize, beta1: f64, beta_t: f64) -> Result<Self> {
        if steps == 0 {
            return Err(Error::InvalidArgument("schedule needs at least one step".into()));
        }
        if !(beta1 > 0.0 && beta1 <= beta_t && beta_t < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "linear schedule needs 0 < beta1 <= betaT < 1, got {beta1}, {beta_t}"
            )));
        }
        let betas = (1..=steps)
            .map(|t| {
                if steps == 1 {
                    beta1
                } else {
                    beta1 + (t - 1) as f64 / (steps - 1) as f64 * (beta_t - beta1)
                }
            })
            .collect();
        let mut s = Self::from_betas(betas)?;
        s.name = format!("linear({steps},{beta1:e},{beta_t:e})");
        Ok(s)
    }

    /// Preset names: `linear-<T>` is `linear(T, 1e-4, 0.02)`; `linear-1000`
    /// is the paper configuration.
    pub fn preset(name: &str) -> Result<Self> {
        let steps = name
            .strip_prefix("linear-")
            .and_then(|t| t.parse::<usize>().ok())
            .ok_or_else(|| Error::InvalidArgument(format!("unknown schedule preset {name:?}")))?;
        let mut s = Self::linear(steps, 1e-4, 0.02)?;
        s.name = name.to_string();
        Ok(s)
    }

    pub fn from_betas(betas: Vec<f64>) -> Result<Self> {
        if betas.is_empty() {
            return Err(Error::InvalidArgument("schedule needs at least one step".into()));
        }
        if let Some(b) = betas.iter().find(|b| !(**b > 0.0 && **b < 1.0)) {
            return Err(Error::InvalidArgument(format!("beta {b} outside (0, 1)")));
        }
        let alphas: Vec<f64> = betas.iter().map(|b| 1.0 - b).collect();
        let mut alpha_bars = Vec::with_capacity(betas.len());
        let mut acc = 1.0;
        for a in &alphas {
            acc *= a;
            alpha_bars.push(acc);
        }
        let posterior_variances = (0..betas.len())
            .map(|i| {
                let prev = if i == 0 { 1.0 } else { alpha_bars[i - 1] };
                (1.0 - prev) / (1.0 - alpha_bars[i]) * betas[i]
            })
            .collect();
        Ok(Self {
            name: "custom".into(),
            sqrt_alpha_bars: alpha_bars.iter().map(|a| a.sqrt()).collect(),
            sqrt_one_minus_alpha_bars: alpha_bars.iter().map(|a| (1.0 - a).sqrt()).collect(),
            betas,
            alphas,
            alpha_bars,
            posterior_variances,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    /// Number of timesteps `T`.
    pub fn len(&self) -> usize {
        self.betas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.betas.is_empty()
    }

    pub fn check_t(&self, t: usize) -> Result<()> {
        if t == 0 || t > self.len() {
            Err(Error::Timestep { t, max: self.len() })
        } else {
            Ok(())
        }
    }

    pub fn betas(&self) -> &[f64] {
        &self.betas
    }

    pub fn alpha_bars(&self) -> &[f64] {
        &self.alpha_bars
    }

    pub fn posterior_variances(&self) -> &[f64] {
        &self.posterior_variances
    }

    pub fn beta(&self, t: usize) -> f64 {
        self.betas[t - 1]
    }

    pub fn alpha(&self, t: usize) -> f64 {
        self.alphas[t - 1]
    }

    /// ᾱ_t, with ᾱ_0 = 1.
    pub fn alpha_bar(&self, t: usize) -> f64 {
        if t == 0 {
            1.0
        } else {
            self.alpha_bars[t - 1]
        }
    }

    pub fn sqrt_alpha_bar(&self, t: usize) -> f64 {
        self.sqrt_alpha_bars[t - 1]
    }

    pub fn sqrt_one_minus_alpha_bar(&self, t: usize) -> f64 {
        self.sqrt_one_minus_alpha_bars[t - 1]
    }

    /// β̃_t; zero at t = 1.
    pub fn posterior_variance(&self, t: usize) -> f64 {
        self.posterior_variances[t - 1]
    }

    /// Weights `(on x̃0, on x_t)` of the posterior mean at step `t`.
    /// At `t = 1` these are exactly `(1, 0)`.
    pub fn posterior_mean_coefficients(&self, t: usize) -> (f64, f64) {
        if t == 1 {
            return (1.0, 0.0);
        }
        let ab = self.alpha_bar(t);
        let ab_prev = self.alpha_bar(t - 1);
        let beta = self.beta(t);
        (
            ab_prev.sqrt() * beta / (1.0 - ab),
            self.alpha(t).sqrt() * (1.0 - ab_prev) / (1.0 - ab),
        )
    }

    /// SHA-256 over the little-endian β table, hex encoded.
    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        for b in &self.betas {
            h.update(b.to_le_bytes());
        }
        hex::encode(h.finalize())
    }
}
