//! Deterministic inputs shared by the benchmarks.

use wavediff_core::{Field, RngState, Volume3};

/// Standard-normal volume of the given dims.
pub fn noise_volume(dims: [usize; 3], seed: u64) -> Volume3 {
    let mut rng = RngState::new(seed);
    let mut data = vec![0f32; dims.iter().product()];
    rng.fill_normal(&mut data);
    Volume3::new(dims, [1.0; 3], data).expect("non-empty dims")
}

/// Standard-normal multi-channel field.
pub fn noise_field(channels: usize, dims: [usize; 3], seed: u64) -> Field<f32> {
    let mut rng = RngState::new(seed);
    let mut f = Field::zeros(channels, dims);
    rng.fill_normal(f.data_mut());
    f
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixtures_are_seeded() {
        assert_eq!(noise_volume([4, 4, 4], 1), noise_volume([4, 4, 4], 1));
        assert_eq!(noise_field(8, [2, 2, 2], 3).len(), 64);
    }
}
