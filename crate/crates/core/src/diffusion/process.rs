//! Forward corruption and single reverse steps.

use crate::error::Result;
use crate::rng::RngState;
use crate::tensor::Field;

use super::NoiseSchedule;

/// `√ᾱ_t · x0 + √(1 − ᾱ_t) · eps`.
pub fn q_sample(
    x0: &Field<f32>,
    t: usize,
    eps: &Field<f32>,
    sched: &NoiseSchedule,
) -> Result<Field<f32>> {
    sched.check_t(t)?;
    x0.ensure_same_shape(eps, "q_sample noise")?;
    let a = sched.sqrt_alpha_bar(t) as f32;
    let b = sched.sqrt_one_minus_alpha_bar(t) as f32;
    let mut out = x0.clone();
    for (o, &e) in out.data_mut().iter_mut().zip(eps.data()) {
        *o = a * *o + b * e;
    }
    Ok(out)
}

/// Mean of `q(x_{t-1} | x_t, x̃0)`.
pub fn posterior_mean(
    x_t: &Field<f32>,
    x0_hat: &Field<f32>,
    t: usize,
    sched: &NoiseSchedule,
) -> Result<Field<f32>> {
    sched.check_t(t)?;
    x_t.ensure_same_shape(x0_hat, "posterior_mean")?;
    let (c0, ct) = sched.posterior_mean_coefficients(t);
    let (c0, ct) = (c0 as f32, ct as f32);
    let mut out = x0_hat.clone();
    for (o, &x) in out.data_mut().iter_mut().zip(x_t.data()) {
        *o = c0 * *o + ct * x;
    }
    Ok(out)
}

pub fn posterior_variance(t: usize, sched: &NoiseSchedule) -> Result<f64> {
    sched.check_t(t)?;
    Ok(sched.posterior_variance(t))
}

/// One ancestral step `μ_t + √β̃_t · z`. At t = 1 the variance is zero and
/// `rng` is not touched.
pub fn p_sample_step(
    x_t: &Field<f32>,
    x0_hat: &Field<f32>,
    t: usize,
    sched: &NoiseSchedule,
    rng: &mut RngState,
) -> Result<Field<f32>> {
    let mut mean = posterior_mean(x_t, x0_hat, t, sched)?;
    let var = sched.posterior_variance(t);
    if t > 1 && var > 0.0 {
        let sd = var.sqrt();
        for v in mean.data_mut() {
            *v = (*v as f64 + sd * rng.normal()) as f32;
        }
    }
    Ok(mean)
}
