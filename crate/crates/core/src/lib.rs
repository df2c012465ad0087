//! Wavelet-domain denoising diffusion for 3D volumes.
//!
//! A volume is decomposed by a single-level 3D Haar transform into eight
//! half-resolution subbands. An x0-predicting DDPM is trained and sampled on
//! the stacked subbands, and samples are mapped back to image space with the
//! inverse transform.
//!
//! Modules:
//! - [`volume`]: the [`Volume3`] data model, the `v3r` file format and the
//!   preprocessing pipeline.
//! - [`wavelet`]: Haar DWT/IDWT and the multi-channel wavelet down/upsampling
//!   operators.
//! - [`diffusion`]: noise schedules, forward corruption, posterior steps,
//!   training and ancestral sampling.
//! - [`denoiser`]: the [`Denoiser`] interface, an analytic Gaussian oracle, a
//!   small trainable convolutional network and Adam.
//! - [`metrics`]: Fréchet distance and 3D MS-SSIM.

// NaN must fail validation, so `!(x > 0.0)` is used deliberately.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod denoiser;
pub mod diffusion;
pub mod error;
pub mod metrics;
pub mod presets;
pub mod rng;
pub mod synthetic;
pub mod tensor;
pub mod volume;
pub mod wavelet;

pub use denoiser::{
    Adam, AnalyticGaussianDenoiser, Denoiser, NetConfig, TinyConvDenoiser, Trainable,
};
pub use diffusion::NoiseSchedule;
pub use error::{Error, Result};
pub use metrics::{FeatureStats, MsSsimConfig};
pub use rng::RngState;
pub use tensor::Field;
pub use volume::{PreprocessRecipe, Volume3};
pub use wavelet::{CoefficientTensor, Subband};
