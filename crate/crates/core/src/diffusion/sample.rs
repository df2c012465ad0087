use super::{p_sample_step, NoiseSchedule};
use crate::denoiser::Denoiser;
use crate::error::{Error, Result};
use crate::rng::RngState;
use crate::tensor::Field;
use crate::volume::Volume3;
use crate::wavelet::{idwt3, CoefficientTensor};

/// Ancestral sampling in coefficient space: `x_T ~ N(0, I)`, then one
/// posterior step per timestep down to `t = 1`. Returns the output of the
/// final step. Coefficients are never clamped.
pub fn sample_coefficients<D: Denoiser + ?Sized>(
    denoiser: &D,
    channels: usize,
    dims: [usize; 3],
    sched: &NoiseSchedule,
    rng: &mut RngState,
) -> Result<Field<f32>> {
    let mut x = Field::from_vec(channels, dims, vec![0.0; channels * dims.iter().product::<usize>()])?;
    rng.fill_normal(x.data_mut());
    for t in (1..=sched.len()).rev() {
        let x0_hat = denoiser.predict(&x, t)?;
        x = p_sample_step(&x, &x0_hat, t, sched, rng)?;
        if x.first_non_finite().is_some() {
            return Err(Error::SamplingDiverged { t });
        }
    }
    Ok(x)
}

/// Samples an 8-subband coefficient tensor of spatial size `half_dims` and
/// inverts it to a volume of twice that size.
pub fn sample<D: Denoiser + ?Sized>(
    denoiser: &D,
    half_dims: [usize; 3],
    sched: &NoiseSchedule,
    rng: &mut RngState,
) -> Result<Volume3> {
    let coeffs = sample_coefficients(denoiser, CoefficientTensor::CHANNELS, half_dims, sched, rng)?;
    idwt3(&CoefficientTensor::from_field(coeffs)?)
}
