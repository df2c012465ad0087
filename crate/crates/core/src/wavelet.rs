//! Single-level orthonormal 3D Haar transform.
//!
//! Along each axis, output index `k` consumes input samples `(2k, 2k+1)`:
//! low = `(x0 + x1)/√2`, high = `(x1 − x0)/√2`. Passes run W, then H, then D.
//! Subband bits are `(D, H, W)` with high = 1, so channel `c` of a
//! [`CoefficientTensor`] is `lll, llh, lhl, lhh, hll, hlh, hhl, hhh` for
//! `c = 0..8`.

use std::path::Path;

use num_traits::Float;
use rayon::prelude::*;

use crate::error::{Error, Result, AXIS_NAMES};
use crate::tensor::Field;
use crate::volume::io::{read_v3r, write_v3r};
use crate::volume::{V3rHeader, Volume3, V3R_DTYPE, V3R_MAGIC};

/// Haar analysis filters.
pub struct HaarFilters;

impl HaarFilters {
    pub const LOW: [f64; 2] = [std::f64::consts::FRAC_1_SQRT_2, std::f64::consts::FRAC_1_SQRT_2];
    pub const HIGH: [f64; 2] = [-std::f64::consts::FRAC_1_SQRT_2, std::f64::consts::FRAC_1_SQRT_2];

    pub fn taps(high: bool) -> [f64; 2] {
        if high {
            Self::HIGH
        } else {
            Self::LOW
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Subband {
    Lll,
    Llh,
    Lhl,
    Lhh,
    Hll,
    Hlh,
    Hhl,
    Hhh,
}

impl Subband {
    pub const ALL: [Subband; 8] = [
        Subband::Lll,
        Subband::Llh,
        Subband::Lhl,
        Subband::Lhh,
        Subband::Hll,
        Subband::Hlh,
        Subband::Hhl,
        Subband::Hhh,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    /// Whether the high-pass filter applies on (D, H, W).
    pub fn high_axes(self) -> [bool; 3] {
        let i = self.index();
        [i & 4 != 0, i & 2 != 0, i & 1 != 0]
    }

    pub fn name(self) -> &'static str {
        ["lll", "llh", "lhl", "lhh", "hll", "hlh", "hhl", "hhh"][self.index()]
    }
}

/// The eight Haar subbands of a volume, stacked as channels at half resolution.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientTensor {
    field: Field<f32>,
    /// Voxel spacing of the image-domain volume.
    spacing: [f64; 3],
}

impl CoefficientTensor {
    pub const CHANNELS: usize = 8;

    pub fn new(half_dims: [usize; 3], data: Vec<f32>) -> Result<Self> {
        Self::from_field(Field::from_vec(Self::CHANNELS, half_dims, data)?)
    }

    pub fn from_field(field: Field<f32>) -> Result<Self> {
        if field.channels() != Self::CHANNELS {
            return Err(Error::Shape(format!(
                "coefficient tensor needs 8 channels, got {}",
                field.channels()
            )));
        }
        if let Some(i) = field.first_non_finite() {
            return Err(Error::NonFinite(i));
        }
        Ok(Self {
            field,
            spacing: [1.0; 3],
        })
    }

    pub fn zeros(half_dims: [usize; 3]) -> Self {
        Self {
            field: Field::zeros(Self::CHANNELS, half_dims),
            spacing: [1.0; 3],
        }
    }

    pub fn with_spacing(mut self, spacing: [f64; 3]) -> Self {
        self.spacing = spacing;
        self
    }

    pub fn half_dims(&self) -> [usize; 3] {
        self.field.dims()
    }

    pub fn volume_dims(&self) -> [usize; 3] {
        self.half_dims().map(|d| d * 2)
    }

    pub fn spacing(&self) -> [f64; 3] {
        self.spacing
    }

    pub fn subband(&self, band: Subband) -> &[f32] {
        self.field.channel(band.index())
    }

    pub fn subband_mut(&mut self, band: Subband) -> &mut [f32] {
        self.field.channel_mut(band.index())
    }

    pub fn data(&self) -> &[f32] {
        self.field.data()
    }

    pub fn as_field(&self) -> &Field<f32> {
        &self.field
    }

    pub fn into_field(self) -> Field<f32> {
        self.field
    }

    /// Writes the tensor as a `v3r` file with dims `[8·D/2, H/2, W/2]` and
    /// `"subbands": true`.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let [d, h, w] = self.half_dims();
        let header = V3rHeader {
            magic: V3R_MAGIC.into(),
            dims: [Self::CHANNELS * d, h, w],
            spacing: self.spacing,
            dtype: V3R_DTYPE.into(),
            subbands: true,
        };
        write_v3r(path.as_ref(), &header, self.data())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let (header, data) = read_v3r(path.as_ref())?;
        if !header.subbands || header.dims[0] % Self::CHANNELS != 0 {
            return Err(Error::Header {
                path: path.as_ref().to_path_buf(),
                message: "not a subband file".into(),
            });
        }
        let half = [header.dims[0] / Self::CHANNELS, header.dims[1], header.dims[2]];
        Ok(Self::new(half, data)?.with_spacing(header.spacing))
    }
}

fn check_even(dims: [usize; 3]) -> Result<()> {
    for (a, &n) in dims.iter().enumerate() {
        if n == 0 || n % 2 != 0 {
            return Err(Error::OddDimension {
                axis: AXIS_NAMES[a],
                len: n,
            });
        }
    }
    Ok(())
}

#[inline]
fn widen<T: Float>(v: T) -> f64 {
    v.to_f64().unwrap_or(f64::NAN)
}

#[inline]
fn narrow<T: Float>(v: f64) -> T {
    T::from(v).unwrap_or_else(T::nan)
}

/// Forward transform of one `dims` channel into eight subband planes of
/// `dims / 2`, written to `out` (length `8 · |dims/2|`, subband-major).
/// Arithmetic is in f64 with a single rounding on store.
fn forward_channel<T: Float + Send + Sync>(input: &[T], dims: [usize; 3], out: &mut [T]) {
    let [_, h, w] = dims;
    let half = [dims[0] / 2, h / 2, w / 2];
    let plane = half[1] * half[2];
    let band_len = half[0] * plane;
    let s = std::f64::consts::FRAC_1_SQRT_2;

    // Group each band's slab for output row-plane k so slabs can be filled in parallel.
    let mut bands: Vec<std::slice::ChunksMut<'_, T>> =
        out.chunks_mut(band_len).map(|b| b.chunks_mut(plane)).collect();
    let slabs: Vec<[&mut [T]; 8]> = (0..half[0])
        .map(|_| std::array::from_fn(|b| bands[b].next().unwrap()))
        .collect();

    let work = |(k, slab): (usize, [&mut [T]; 8])| {
        for j in 0..half[1] {
            let r00 = ((2 * k) * h + 2 * j) * w;
            let r01 = r00 + w;
            let r10 = ((2 * k + 1) * h + 2 * j) * w;
            let r11 = r10 + w;
            for i in 0..half[2] {
                let x = 2 * i;
                // a[dz][dy][dx]
                let at = |r: usize| [widen(input[r + x]), widen(input[r + x + 1])];
                let a = [[at(r00), at(r01)], [at(r10), at(r11)]];
                // W pass
                let mut bw = [[[0.0; 2]; 2]; 2];
                for dz in 0..2 {
                    for dy in 0..2 {
                        let [x0, x1] = a[dz][dy];
                        bw[dz][dy] = [(x0 + x1) * s, (x1 - x0) * s];
                    }
                }
                // H pass
                let mut bh = [[[0.0; 2]; 2]; 2];
                for dz in 0..2 {
                    for fw in 0..2 {
                        let (x0, x1) = (bw[dz][0][fw], bw[dz][1][fw]);
                        bh[dz][0][fw] = (x0 + x1) * s;
                        bh[dz][1][fw] = (x1 - x0) * s;
                    }
                }
                // D pass
                let o = j * half[2] + i;
                for fh in 0..2 {
                    for fw in 0..2 {
                        let (x0, x1) = (bh[0][fh][fw], bh[1][fh][fw]);
                        slab[fh * 2 + fw][o] = narrow((x0 + x1) * s);
                        slab[4 + fh * 2 + fw][o] = narrow((x1 - x0) * s);
                    }
                }
            }
        }
    };
    slabs.into_par_iter().enumerate().for_each(|(k, slab)| work((k, slab)));
}

/// Inverse of [`forward_channel`], with the same f64 arithmetic.
fn inverse_channel<T: Float + Send + Sync>(coeffs: &[T], half: [usize; 3], out: &mut [T]) {
    let [h, w] = [half[1] * 2, half[2] * 2];
    let plane = half[1] * half[2];
    let band_len = half[0] * plane;
    let s = std::f64::consts::FRAC_1_SQRT_2;

    out.par_chunks_mut(2 * h * w).enumerate().for_each(|(k, slab)| {
        for j in 0..half[1] {
            for i in 0..half[2] {
                let o = k * plane + j * half[2] + i;
                let c: [f64; 8] = std::array::from_fn(|b| widen(coeffs[b * band_len + o]));
                // D pass (undo)
                let mut bh = [[[0.0; 2]; 2]; 2];
                for fh in 0..2 {
                    for fw in 0..2 {
                        let (lo, hi) = (c[fh * 2 + fw], c[4 + fh * 2 + fw]);
                        bh[0][fh][fw] = (lo - hi) * s;
                        bh[1][fh][fw] = (lo + hi) * s;
                    }
                }
                // H pass (undo)
                let mut bw = [[[0.0; 2]; 2]; 2];
                for dz in 0..2 {
                    for fw in 0..2 {
                        let (lo, hi) = (bh[dz][0][fw], bh[dz][1][fw]);
                        bw[dz][0][fw] = (lo - hi) * s;
                        bw[dz][1][fw] = (lo + hi) * s;
                    }
                }
                // W pass (undo)
                for dz in 0..2 {
                    for dy in 0..2 {
                        let (lo, hi) = (bw[dz][dy][0], bw[dz][dy][1]);
                        let r = (dz * h + 2 * j + dy) * w + 2 * i;
                        slab[r] = narrow((lo - hi) * s);
                        slab[r + 1] = narrow((lo + hi) * s);
                    }
                }
            }
        }
    });
}

/// Single-level 3D Haar DWT. All dims must be even.
pub fn dwt3(vol: &Volume3) -> Result<CoefficientTensor> {
    let dims = vol.dims();
    check_even(dims)?;
    let half = dims.map(|d| d / 2);
    let mut data = vec![0f32; vol.len()];
    forward_channel(vol.data(), dims, &mut data);
    Ok(CoefficientTensor {
        field: Field::from_vec(8, half, data)?,
        spacing: vol.spacing(),
    })
}

/// Inverse of [`dwt3`].
pub fn idwt3(coeffs: &CoefficientTensor) -> Result<Volume3> {
    let half = coeffs.half_dims();
    let dims = half.map(|d| d * 2);
    let mut data = vec![0f32; dims.iter().product()];
    inverse_channel(coeffs.data(), half, &mut data);
    Volume3::new(dims, coeffs.spacing(), data)
}

/// Per-channel DWT of a `c`-channel field: output has `8c` channels at half
/// resolution, channel `8i + b` holding subband `b` of input channel `i`.
pub fn dwt_downsample<T: Float + Send + Sync>(features: &Field<T>) -> Result<Field<T>> {
    let dims = features.dims();
    check_even(dims)?;
    let half = dims.map(|d| d / 2);
    let mut out = vec![T::zero(); features.len()];
    let per = features.spatial_len();
    for (c, chunk) in out.chunks_mut(per).enumerate() {
        forward_channel(features.channel(c), dims, chunk);
    }
    Field::from_vec(features.channels() * 8, half, out)
}

/// Inverse of [`dwt_downsample`]; the channel count must be a multiple of 8.
pub fn idwt_upsample<T: Float + Send + Sync>(features: &Field<T>) -> Result<Field<T>> {
    if !features.channels().is_multiple_of(8) {
        return Err(Error::Shape(format!(
            "idwt_upsample needs a multiple of 8 channels, got {}",
            features.channels()
        )));
    }
    let half = features.dims();
    let dims = half.map(|d| d * 2);
    let per = 8 * features.spatial_len();
    let mut out = vec![T::zero(); features.len()];
    for (c, chunk) in out.chunks_mut(per).enumerate() {
        inverse_channel(&features.data()[c * per..(c + 1) * per], half, chunk);
    }
    Field::from_vec(features.channels() / 8, dims, out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngState;

    /// Direct evaluation of every coefficient from the 2-tap filters.
    fn brute_force(vol: &Volume3) -> Vec<f64> {
        let [d, h, w] = vol.dims();
        let half = [d / 2, h / 2, w / 2];
        let mut out = Vec::new();
        for band in Subband::ALL {
            let [hd, hh, hw] = band.high_axes();
            let (fd, fh, fw) = (HaarFilters::taps(hd), HaarFilters::taps(hh), HaarFilters::taps(hw));
            for k in 0..half[0] {
                for j in 0..half[1] {
                    for i in 0..half[2] {
                        let mut acc = 0.0;
                        for dz in 0..2 {
                            for dy in 0..2 {
                                for dx in 0..2 {
                                    acc += fd[dz]
                                        * fh[dy]
                                        * fw[dx]
                                        * vol.get(2 * k + dz, 2 * j + dy, 2 * i + dx) as f64;
                                }
                            }
                        }
                        out.push(acc);
                    }
                }
            }
        }
        out
    }

    fn random_volume(dims: [usize; 3], seed: u64) -> Volume3 {
        let mut rng = RngState::new(seed);
        Volume3::from_fn(dims, |_, _, _| (rng.uniform() * 20.0 - 10.0) as f32).unwrap()
    }

    #[test]
    fn filters_are_orthonormal() {
        let dot = |a: [f64; 2], b: [f64; 2]| a[0] * b[0] + a[1] * b[1];
        assert!((dot(HaarFilters::LOW, HaarFilters::LOW) - 1.0).abs() < 1e-15);
        assert!((dot(HaarFilters::HIGH, HaarFilters::HIGH) - 1.0).abs() < 1e-15);
        assert!(dot(HaarFilters::LOW, HaarFilters::HIGH).abs() < 1e-15);
    }

    #[test]
    fn constant_block() {
        let v = Volume3::filled([2, 2, 2], [1.0; 3], 1.0).unwrap();
        let c = dwt3(&v).unwrap();
        assert!((c.subband(Subband::Lll)[0] - 2.0 * std::f32::consts::SQRT_2).abs() < 1e-6);
        for b in &Subband::ALL[1..] {
            assert!(c.subband(*b)[0].abs() < 1e-7);
        }
    }

    #[test]
    fn impulse_signs() {
        let mut v = Volume3::filled([2, 2, 2], [1.0; 3], 0.0).unwrap();
        v.data_mut()[0] = 1.0;
        let c = dwt3(&v).unwrap();
        let mag = std::f32::consts::FRAC_1_SQRT_2.powi(3);
        for b in Subband::ALL {
            let highs = b.high_axes().iter().filter(|&&x| x).count() as i32;
            let want = mag * (-1f32).powi(highs);
            assert!((c.subband(b)[0] - want).abs() < 1e-6, "{}", b.name());
        }
    }

    #[test]
    fn inverse_of_constant_coefficients() {
        let mut c = CoefficientTensor::zeros([1, 1, 1]);
        c.subband_mut(Subband::Lll)[0] = 2.0 * std::f32::consts::SQRT_2;
        let v = idwt3(&c).unwrap();
        assert_eq!(v.dims(), [2, 2, 2]);
        assert!(v.data().iter().all(|&x| (x - 1.0).abs() < 1e-6));
        let z = idwt3(&CoefficientTensor::zeros([2, 3, 1])).unwrap();
        assert_eq!(z.dims(), [4, 6, 2]);
        assert!(z.data().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn matches_brute_force_oracle() {
        for (n, seed) in [(4, 1), (8, 2), (4, 3)] {
            let v = random_volume([n, n, n], seed);
            let fast = dwt3(&v).unwrap();
            let slow = brute_force(&v);
            for (a, b) in fast.data().iter().zip(&slow) {
                assert!((*a as f64 - b).abs() < 1e-6 * 10.0f64.max(b.abs()), "{a} vs {b}");
            }
        }
        // Anisotropic shape too.
        let v = random_volume([2, 6, 4], 9);
        for (a, b) in dwt3(&v).unwrap().data().iter().zip(&brute_force(&v)) {
            assert!((*a as f64 - b).abs() < 1e-5);
        }
    }

    #[test]
    fn roundtrip_and_energy() {
        let v = random_volume([32, 32, 32], 5);
        let c = dwt3(&v).unwrap();
        let back = idwt3(&c).unwrap();
        let err = v
            .data()
            .iter()
            .zip(back.data())
            .map(|(a, b)| (a - b).abs())
            .fold(0f32, f32::max);
        assert!(err < 1e-5, "max err {err}");
        let e0 = v.sum_squares();
        let e1 = c.as_field().sum_squares();
        assert!(((e1 - e0) / e0).abs() < 1e-5);
        assert_eq!(back.spacing(), v.spacing());
    }

    #[test]
    fn linearity() {
        let u = random_volume([16, 16, 16], 11);
        let w = random_volume([16, 16, 16], 12);
        let (a, b) = (0.7f32, -1.3f32);
        let combo = Volume3::new(
            u.dims(),
            [1.0; 3],
            u.data().iter().zip(w.data()).map(|(x, y)| a * x + b * y).collect(),
        )
        .unwrap();
        let lhs = dwt3(&combo).unwrap();
        let (cu, cw) = (dwt3(&u).unwrap(), dwt3(&w).unwrap());
        for ((l, x), y) in lhs.data().iter().zip(cu.data()).zip(cw.data()) {
            assert!((l - (a * x + b * y)).abs() < 1e-5 * 30.0);
        }
    }

    #[test]
    fn block_constant_volume_has_no_detail() {
        let v = Volume3::from_fn([8, 6, 4], |z, y, x| ((z / 2) * 7 + (y / 2) * 3 + x / 2) as f32 * 0.9)
            .unwrap();
        let c = dwt3(&v).unwrap();
        for b in &Subband::ALL[1..] {
            assert!(c.subband(*b).iter().all(|x| x.abs() < 1e-6));
        }
    }

    #[test]
    fn odd_dims_rejected() {
        let v = Volume3::filled([4, 3, 4], [1.0; 3], 0.0).unwrap();
        assert!(matches!(dwt3(&v), Err(Error::OddDimension { axis: "H", len: 3 })));
    }

    #[test]
    fn down_up_sampling() {
        let mut rng = RngState::new(3);
        let mut data = vec![0f64; 3 * 4 * 6 * 2];
        data.iter_mut().for_each(|v| *v = rng.normal());
        let f = Field::from_vec(3, [4, 6, 2], data).unwrap();
        let d = dwt_downsample(&f).unwrap();
        assert_eq!(d.channels(), 24);
        assert_eq!(d.dims(), [2, 3, 1]);
        for c in 0..3 {
            let e_in: f64 = f.channel(c).iter().map(|v| v * v).sum();
            let e_out: f64 = (0..8).flat_map(|b| d.channel(8 * c + b)).map(|v| v * v).sum();
            assert!(((e_out - e_in) / e_in).abs() < 1e-12);
        }
        let back = idwt_upsample(&d).unwrap();
        assert!(back.same_shape(&f));
        for (a, b) in back.data().iter().zip(f.data()) {
            assert!((a - b).abs() < 1e-12);
        }
        let again = dwt_downsample(&idwt_upsample(&d).unwrap()).unwrap();
        for (a, b) in again.data().iter().zip(d.data()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn single_channel_downsample_matches_dwt3() {
        let v = random_volume([4, 4, 6], 21);
        let f = Field::from_vec(1, v.dims(), v.data().to_vec()).unwrap();
        assert_eq!(dwt_downsample(&f).unwrap().data(), dwt3(&v).unwrap().data());
    }

    #[test]
    fn upsample_sixteen_channels_matches_two_idwt3_calls() {
        let mut rng = RngState::new(8);
        let mut data = vec![0f32; 16 * 8];
        rng.fill_normal(&mut data);
        let f = Field::from_vec(16, [2, 2, 2], data.clone()).unwrap();
        let up = idwt_upsample(&f).unwrap();
        assert_eq!(up.channels(), 2);
        for c in 0..2 {
            let ct = CoefficientTensor::new([2, 2, 2], data[c * 64..(c + 1) * 64].to_vec()).unwrap();
            assert_eq!(up.channel(c), idwt3(&ct).unwrap().data());
        }
        let zeros = idwt_upsample(&Field::<f32>::zeros(8, [1, 2, 3])).unwrap();
        assert_eq!((zeros.channels(), zeros.dims()), (1, [2, 4, 6]));
        assert!(zeros.data().iter().all(|&v| v == 0.0));
        assert!(idwt_upsample(&Field::<f32>::zeros(12, [1, 1, 1])).is_err());
    }

    #[test]
    fn subband_file_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let c = dwt3(&random_volume([4, 6, 8], 4)).unwrap().with_spacing([1.0, 2.0, 3.0]);
        c.save(dir.path().join("c")).unwrap();
        let json = std::fs::read_to_string(dir.path().join("c.v3r.json")).unwrap();
        let hdr: serde_json::Value = serde_json::from_str(&json).unwrap();
        assert_eq!(hdr["dims"], serde_json::json!([16, 3, 4]));
        assert_eq!(hdr["subbands"], true);
        let back = CoefficientTensor::load(dir.path().join("c")).unwrap();
        assert_eq!(back, c);
    }
}
