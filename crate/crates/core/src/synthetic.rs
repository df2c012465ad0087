//! Seeded synthetic volumes: a few soft-edged ellipsoids on a zero
//! background, intensities in `[0, 1]`.

use crate::error::Result;
use crate::rng::RngState;
use crate::volume::Volume3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EllipsoidParams {
    pub min_count: usize,
    pub max_count: usize,
    /// Radius range as a fraction of each axis length.
    pub radius: (f64, f64),
    pub intensity: (f64, f64),
    /// Width of the edge falloff in normalized-radius units.
    pub softness: f64,
}

impl Default for EllipsoidParams {
    fn default() -> Self {
        Self {
            min_count: 1,
            max_count: 3,
            radius: (0.15, 0.35),
            intensity: (0.3, 1.0),
            softness: 0.08,
        }
    }
}

fn uniform_in(rng: &mut RngState, (lo, hi): (f64, f64)) -> f64 {
    lo + (hi - lo) * rng.uniform()
}

pub fn ellipsoid_volume(dims: [usize; 3], params: &EllipsoidParams, rng: &mut RngState) -> Result<Volume3> {
    let count = rng.uniform_inclusive(params.min_count, params.max_count);
    let shapes: Vec<([f64; 3], [f64; 3], f64)> = (0..count)
        .map(|_| {
            let center = dims.map(|d| d as f64 * uniform_in(rng, (0.3, 0.7)));
            let radii = dims.map(|d| (d as f64 * uniform_in(rng, params.radius)).max(0.5));
            (center, radii, uniform_in(rng, params.intensity))
        })
        .collect();
    let mut vol = Volume3::filled(dims, [1.0; 3], 0.0)?;
    for z in 0..dims[0] {
        for y in 0..dims[1] {
            for x in 0..dims[2] {
                let p = [z as f64 + 0.5, y as f64 + 0.5, x as f64 + 0.5];
                let v: f64 = shapes
                    .iter()
                    .map(|(c, r, a)| {
                        let rho = (0..3)
                            .map(|i| ((p[i] - c[i]) / r[i]).powi(2))
                            .sum::<f64>()
                            .sqrt();
                        a / (1.0 + ((rho - 1.0) / params.softness).exp())
                    })
                    .sum();
                let i = vol.index(z, y, x);
                vol.data_mut()[i] = v.min(1.0) as f32;
            }
        }
    }
    Ok(vol)
}

/// `count` volumes; volume `i` draws from stream `i` of `seed`.
pub fn ellipsoid_dataset(count: usize, dims: [usize; 3], seed: u64) -> Result<Vec<Volume3>> {
    let params = EllipsoidParams::default();
    (0..count)
        .map(|i| ellipsoid_volume(dims, &params, &mut RngState::with_stream(seed, i as u64)))
        .collect()
}
