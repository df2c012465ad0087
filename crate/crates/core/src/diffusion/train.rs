use rayon::prelude::*;

use super::{q_sample, NoiseSchedule};
use crate::denoiser::{Adam, Trainable};
use crate::error::{Error, Result};
use crate::rng::RngState;
use crate::tensor::Field;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepReport {
    /// Batch mean of `‖x̃0 − x0‖²`, measured before the update.
    pub loss: f64,
    pub t_mean: f64,
}

/// One x0-prediction training iteration.
///
/// Timesteps and noise are drawn from `rng` element by element in batch
/// order; forward/backward passes then run in parallel and the parameter
/// gradients are summed in batch order, so the result does not depend on the
/// thread count.
pub fn train_step<D: Trainable>(
    batch: &[Field<f32>],
    denoiser: &mut D,
    sched: &NoiseSchedule,
    rng: &mut RngState,
    opt: &mut Adam,
) -> Result<StepReport> {
    let Some(first) = batch.first() else {
        return Err(Error::InvalidArgument("empty training batch".into()));
    };
    for x0 in batch {
        first.ensure_same_shape(x0, "training batch element")?;
    }
    let mut draws = Vec::with_capacity(batch.len());
    for x0 in batch {
        let t = rng.uniform_inclusive(1, sched.len());
        let mut eps = Field::zeros(x0.channels(), x0.dims());
        rng.fill_normal(eps.data_mut());
        draws.push((t, eps));
    }

    let scale = 2.0 / batch.len() as f32;
    let model = &*denoiser;
    let per_element = batch
        .par_iter()
        .zip(draws.par_iter())
        .map(|(x0, (t, eps))| {
            let x_t = q_sample(x0, *t, eps, sched)?;
            let (x0_hat, tape) = model.forward_with_tape(&x_t, *t)?;
            let mut diff = x0_hat;
            for (d, &x) in diff.data_mut().iter_mut().zip(x0.data()) {
                *d -= x;
            }
            let sq = diff.sum_squares();
            for d in diff.data_mut() {
                *d *= scale;
            }
            let grads = model.backward(&tape, &diff)?;
            Ok((sq, grads.params))
        })
        .collect::<Result<Vec<_>>>()?;

    let loss = per_element.iter().map(|(sq, _)| sq).sum::<f64>() / batch.len() as f64;
    let t_mean = draws.iter().map(|(t, _)| *t as f64).sum::<f64>() / batch.len() as f64;
    if !loss.is_finite() {
        return Err(Error::NonFiniteLoss {
            step: opt.step_count() + 1,
            loss,
        });
    }
    let mut total = vec![0.0f32; denoiser.parameters().len()];
    for (_, g) in &per_element {
        for (a, &b) in total.iter_mut().zip(g) {
            *a += b;
        }
    }
    opt.update(denoiser.parameters_mut(), &total)?;
    Ok(StepReport { loss, t_mean })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::denoiser::{IdentityDenoiser, NetConfig, TinyConvDenoiser, ZeroDenoiser};

    fn gaussian_batch(n: usize, dims: [usize; 3], seed: u64) -> Vec<Field<f32>> {
        let mut rng = RngState::new(seed);
        (0..n)
            .map(|_| {
                let mut f = Field::zeros(8, dims);
                rng.fill_normal(f.data_mut());
                f
            })
            .collect()
    }

    #[test]
    fn zero_denoiser_loss_is_data_energy() {
        let sched = NoiseSchedule::preset("linear-100").unwrap();
        let batch = gaussian_batch(16, [4, 4, 4], 1);
        let dim = batch[0].len() as f64;
        let mut opt = Adam::new(1e-3, 0);
        let mut rng = RngState::new(2);
        let mut total = 0.0;
        for _ in 0..20 {
            total += train_step(&batch, &mut ZeroDenoiser, &sched, &mut rng, &mut opt)
                .unwrap()
                .loss;
        }
        let mean = total / 20.0;
        assert!((mean / dim - 1.0).abs() < 0.05, "per element {}", mean / dim);
    }

    #[test]
    fn identity_denoiser_matches_closed_form() {
        // Single-timestep schedule pins t, so the expectation is exact.
        let sched = NoiseSchedule::from_betas(vec![0.02]).unwrap();
        let ab = sched.alpha_bar(1);
        let batch = gaussian_batch(4, [4, 4, 4], 3);
        let dim = batch[0].len() as f64;
        let energy = batch.iter().map(|x| x.sum_squares()).sum::<f64>() / batch.len() as f64;
        let want = (1.0 - ab.sqrt()).powi(2) * energy + (1.0 - ab) * dim;
        let mut opt = Adam::new(1e-3, 0);
        let mut rng = RngState::new(4);
        let n = 200;
        let mean = (0..n)
            .map(|_| {
                train_step(&batch, &mut IdentityDenoiser, &sched, &mut rng, &mut opt)
                    .unwrap()
                    .loss
            })
            .sum::<f64>()
            / n as f64;
        assert!((mean / want - 1.0).abs() < 0.05, "mc {mean} vs {want}");
    }

    #[test]
    fn loss_trace_is_reproducible() {
        let sched = NoiseSchedule::preset("linear-100").unwrap();
        let batch = gaussian_batch(3, [4, 4, 4], 5);
        let run = || {
            let mut rng = RngState::new(6);
            let mut net = TinyConvDenoiser::<f32>::init(NetConfig::desk(), &mut rng).unwrap();
            let mut opt = Adam::new(1e-3, net.parameter_count());
            let trace: Vec<u64> = (0..10)
                .map(|_| {
                    train_step(&batch, &mut net, &sched, &mut rng, &mut opt)
                        .unwrap()
                        .loss
                        .to_bits()
                })
                .collect();
            (trace, net)
        };
        let (a, na) = run();
        let (b, nb) = run();
        assert_eq!(a, b);
        assert_eq!(na, nb);
    }

    #[test]
    fn empty_batch_is_an_error() {
        let sched = NoiseSchedule::preset("linear-100").unwrap();
        let mut opt = Adam::new(1e-3, 0);
        let r = train_step(&[], &mut ZeroDenoiser, &sched, &mut RngState::new(0), &mut opt);
        assert!(r.is_err());
    }
}
