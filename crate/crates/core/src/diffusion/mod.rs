//! x0-prediction DDPM on wavelet coefficients.

mod process;
mod sample;
mod schedule;
mod train;

pub use process::{p_sample_step, posterior_mean, posterior_variance, q_sample};
pub use sample::{sample, sample_coefficients};
pub use schedule::NoiseSchedule;
pub use train::{train_step, StepReport};
