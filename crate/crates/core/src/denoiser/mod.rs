//! Time-conditioned x0 predictors and their optimizer.

mod adam;
mod analytic;
mod checkpoint;
mod embedding;
pub(crate) mod layers;
mod net;

pub use adam::Adam;
pub use analytic::AnalyticGaussianDenoiser;
pub use checkpoint::{
    load_checkpoint, save_checkpoint, Checkpoint, CheckpointManifest, CheckpointMeta, LayoutEntry,
    OptimizerManifest, CHECKPOINT_FORMAT,
};
pub use embedding::timestep_embedding;
pub use net::{NetConfig, NetGradients, NetTape, ParamLayout, TinyConvDenoiser};

use crate::error::Result;
use crate::tensor::Field;

/// Predicts x̃0 from a noisy sample `x_t` at timestep `t`.
pub trait Denoiser: Send + Sync {
    /// Output has the same shape as `x_t`.
    fn predict(&self, x_t: &Field<f32>, t: usize) -> Result<Field<f32>>;
}

/// Gradient of a scalar loss with respect to parameters and input.
#[derive(Debug, Clone)]
pub struct Gradients {
    pub params: Vec<f32>,
    pub input: Field<f32>,
}

/// A denoiser with a differentiable forward pass and a flat parameter vector.
pub trait Trainable: Denoiser {
    type Tape: Send;

    fn forward_with_tape(&self, x_t: &Field<f32>, t: usize) -> Result<(Field<f32>, Self::Tape)>;

    /// Backpropagates `grad_out` (dLoss/dOutput) through the recorded pass.
    fn backward(&self, tape: &Self::Tape, grad_out: &Field<f32>) -> Result<Gradients>;

    fn parameters(&self) -> &[f32];

    fn parameters_mut(&mut self) -> &mut [f32];
}

/// Returns `x_t` unchanged. Parameter-free baseline.
#[derive(Debug, Clone, Copy, Default)]
pub struct IdentityDenoiser;

/// Always predicts zero. Parameter-free baseline.
#[derive(Debug, Clone, Copy, Default)]
pub struct ZeroDenoiser;

impl Denoiser for IdentityDenoiser {
    fn predict(&self, x_t: &Field<f32>, _t: usize) -> Result<Field<f32>> {
        Ok(x_t.clone())
    }
}

impl Trainable for IdentityDenoiser {
    type Tape = ();

    fn forward_with_tape(&self, x_t: &Field<f32>, t: usize) -> Result<(Field<f32>, ())> {
        Ok((self.predict(x_t, t)?, ()))
    }

    fn backward(&self, _tape: &(), grad_out: &Field<f32>) -> Result<Gradients> {
        Ok(Gradients {
            params: Vec::new(),
            input: grad_out.clone(),
        })
    }

    fn parameters(&self) -> &[f32] {
        &[]
    }

    fn parameters_mut(&mut self) -> &mut [f32] {
        &mut []
    }
}

impl Denoiser for ZeroDenoiser {
    fn predict(&self, x_t: &Field<f32>, _t: usize) -> Result<Field<f32>> {
        Ok(Field::zeros(x_t.channels(), x_t.dims()))
    }
}

impl Trainable for ZeroDenoiser {
    type Tape = ();

    fn forward_with_tape(&self, x_t: &Field<f32>, t: usize) -> Result<(Field<f32>, ())> {
        Ok((self.predict(x_t, t)?, ()))
    }

    fn backward(&self, _tape: &(), grad_out: &Field<f32>) -> Result<Gradients> {
        Ok(Gradients {
            params: Vec::new(),
            input: Field::zeros(grad_out.channels(), grad_out.dims()),
        })
    }

    fn parameters(&self) -> &[f32] {
        &[]
    }

    fn parameters_mut(&mut self) -> &mut [f32] {
        &mut []
    }
}
