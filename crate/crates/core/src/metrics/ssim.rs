use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::pairwise_sum;
use crate::error::{Error, Result};
use crate::rng::RngState;
use crate::volume::{avg_pool2, center_crop, Volume3};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MsSsimConfig {
    pub window_size: usize,
    pub window_sigma: f64,
    /// Finest scale first.
    pub scale_weights: Vec<f64>,
    pub k1: f64,
    pub k2: f64,
    pub data_range: f64,
}

impl Default for MsSsimConfig {
    fn default() -> Self {
        Self {
            window_size: 11,
            window_sigma: 1.5,
            scale_weights: vec![0.0448, 0.2856, 0.3001, 0.2363, 0.1333],
            k1: 0.01,
            k2: 0.03,
            data_range: 2.0,
        }
    }
}

impl MsSsimConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(format!("ms-ssim config: {m}")));
        if self.window_size == 0 || self.window_size.is_multiple_of(2) {
            return bad("window_size must be odd");
        }
        if !(self.window_sigma > 0.0) {
            return bad("window_sigma must be positive");
        }
        if self.scale_weights.is_empty() || self.scale_weights.iter().any(|w| !(*w > 0.0)) {
            return bad("scale_weights must be non-empty and positive");
        }
        if !(self.data_range > 0.0) || !(self.k1 > 0.0) || !(self.k2 > 0.0) {
            return bad("data_range, k1 and k2 must be positive");
        }
        Ok(())
    }

    /// SHA-256 over the canonical JSON form.
    pub fn hash(&self) -> String {
        super::json_hash(self)
    }

    fn window(&self) -> Vec<f64> {
        let r = (self.window_size / 2) as f64;
        let g: Vec<f64> = (0..self.window_size)
            .map(|i| {
                let x = i as f64 - r;
                (-x * x / (2.0 * self.window_sigma * self.window_sigma)).exp()
            })
            .collect();
        let s: f64 = g.iter().sum();
        g.into_iter().map(|v| v / s).collect()
    }
}

/// Spatial means of the SSIM terms at one scale.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SsimComponents {
    pub luminance: f64,
    pub contrast_structure: f64,
}

/// Number of scales whose smallest dimension still fits the window.
pub fn usable_scales(dims: [usize; 3], cfg: &MsSsimConfig) -> usize {
    let mut d = dims;
    let mut s = 0;
    while s < cfg.scale_weights.len() && d.iter().all(|&v| v >= cfg.window_size) {
        s += 1;
        d = d.map(|v| v / 2);
    }
    s
}

/// Valid-mode separable filtering of a row-major `(D, H, W)` field.
fn filter_valid(data: &[f64], dims: [usize; 3], g: &[f64]) -> (Vec<f64>, [usize; 3]) {
    let k = g.len();
    let [d, h, w] = dims;
    let ow = w + 1 - k;
    let mut a = vec![0.0; d * h * ow];
    for r in 0..d * h {
        let src = &data[r * w..(r + 1) * w];
        for x in 0..ow {
            a[r * ow + x] = g.iter().zip(&src[x..x + k]).map(|(gi, v)| gi * v).sum();
        }
    }
    let oh = h + 1 - k;
    let mut b = vec![0.0; d * oh * ow];
    for z in 0..d {
        for y in 0..oh {
            for x in 0..ow {
                b[(z * oh + y) * ow + x] = (0..k).map(|j| g[j] * a[(z * h + y + j) * ow + x]).sum();
            }
        }
    }
    let od = d + 1 - k;
    let plane = oh * ow;
    let mut c = vec![0.0; od * plane];
    for z in 0..od {
        for p in 0..plane {
            c[z * plane + p] = (0..k).map(|j| g[j] * b[(z + j) * plane + p]).sum();
        }
    }
    (c, [od, oh, ow])
}

pub fn ssim_single_scale(a: &Volume3, b: &Volume3, cfg: &MsSsimConfig) -> Result<SsimComponents> {
    cfg.validate()?;
    if a.dims() != b.dims() {
        return Err(Error::Shape(format!(
            "ssim inputs differ in dims: {:?} vs {:?}",
            a.dims(),
            b.dims()
        )));
    }
    if a.dims().iter().any(|&d| d < cfg.window_size) {
        return Err(Error::Shape(format!(
            "dims {:?} smaller than the {}-voxel window",
            a.dims(),
            cfg.window_size
        )));
    }
    let g = cfg.window();
    let dims = a.dims();
    let av: Vec<f64> = a.data().iter().map(|&v| v as f64).collect();
    let bv: Vec<f64> = b.data().iter().map(|&v| v as f64).collect();
    let aa: Vec<f64> = av.iter().map(|v| v * v).collect();
    let bb: Vec<f64> = bv.iter().map(|v| v * v).collect();
    let ab: Vec<f64> = av.iter().zip(&bv).map(|(x, y)| x * y).collect();
    let maps: Vec<Vec<f64>> = [&av, &bv, &aa, &bb, &ab]
        .par_iter()
        .map(|m| filter_valid(m, dims, &g).0)
        .collect();
    let (mu_a, mu_b, e_aa, e_bb, e_ab) = (&maps[0], &maps[1], &maps[2], &maps[3], &maps[4]);
    let c1 = (cfg.k1 * cfg.data_range).powi(2);
    let c2 = (cfg.k2 * cfg.data_range).powi(2);
    let n = mu_a.len();
    let mut l_terms = Vec::with_capacity(n);
    let mut cs_terms = Vec::with_capacity(n);
    for i in 0..n {
        let (ma, mb) = (mu_a[i], mu_b[i]);
        let va = e_aa[i] - ma * ma;
        let vb = e_bb[i] - mb * mb;
        let cov = e_ab[i] - ma * mb;
        l_terms.push((2.0 * (ma * mb) + c1) / (ma * ma + mb * mb + c1));
        cs_terms.push((2.0 * cov + c2) / (va + vb + c2));
    }
    Ok(SsimComponents {
        luminance: pairwise_sum(&l_terms) / n as f64,
        contrast_structure: pairwise_sum(&cs_terms) / n as f64,
    })
}

/// `sign(x)·|x|^w`, so fractional weights stay real for negative terms.
fn signed_pow(x: f64, w: f64) -> f64 {
    x.signum() * x.abs().powf(w)
}

fn halve(v: &Volume3) -> Result<Volume3> {
    let even = v.dims().map(|d| d - d % 2);
    if even == v.dims() {
        avg_pool2(v)
    } else {
        avg_pool2(&center_crop(v, even)?)
    }
}

/// Contrast-structure at every usable scale, luminance at the coarsest one,
/// with the weights renormalized over the usable scales.
pub fn ms_ssim(a: &Volume3, b: &Volume3, cfg: &MsSsimConfig) -> Result<f64> {
    cfg.validate()?;
    if a.dims() != b.dims() {
        return Err(Error::Shape(format!(
            "ms-ssim inputs differ in dims: {:?} vs {:?}",
            a.dims(),
            b.dims()
        )));
    }
    let scales = usable_scales(a.dims(), cfg);
    if scales == 0 {
        return Err(Error::Shape(format!(
            "dims {:?} smaller than the {}-voxel window",
            a.dims(),
            cfg.window_size
        )));
    }
    let total: f64 = cfg.scale_weights[..scales].iter().sum();
    let mut x = a.clone();
    let mut y = b.clone();
    let mut value = 1.0;
    for s in 0..scales {
        let w = cfg.scale_weights[s] / total;
        let c = ssim_single_scale(&x, &y, cfg)?;
        value *= signed_pow(c.contrast_structure, w);
        if s + 1 == scales {
            value *= signed_pow(c.luminance, w);
        } else {
            x = halve(&x)?;
            y = halve(&y)?;
        }
    }
    Ok(value.clamp(-1.0, 1.0))
}

/// Mean MS-SSIM over disjoint random pairs of `samples`; an odd leftover is
/// dropped.
pub fn diversity_ms_ssim(samples: &[Volume3], cfg: &MsSsimConfig, rng: &mut RngState) -> Result<f64> {
    if samples.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "diversity needs at least 2 samples, got {}",
            samples.len()
        )));
    }
    let mut order: Vec<usize> = (0..samples.len()).collect();
    rng.shuffle(&mut order);
    let values = order
        .par_chunks_exact(2)
        .map(|p| ms_ssim(&samples[p[0]], &samples[p[1]], cfg))
        .collect::<Result<Vec<f64>>>()?;
    Ok(pairwise_sum(&values) / values.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn noise(dims: [usize; 3], rng: &mut RngState, scale: f64, offset: f64) -> Volume3 {
        let mut v = Volume3::filled(dims, [1.0; 3], 0.0).unwrap();
        for x in v.data_mut() {
            *x = (offset + scale * rng.normal()) as f32;
        }
        v
    }

    fn smooth(dims: [usize; 3]) -> Volume3 {
        Volume3::from_fn(dims, |z, y, x| {
            ((z as f32 * 0.3).sin() + (y as f32 * 0.2).cos() * (x as f32 * 0.25).sin()) * 0.5
        })
        .unwrap()
    }

    #[test]
    fn window_is_normalized_and_symmetric() {
        let g = MsSsimConfig::default().window();
        assert_eq!(g.len(), 11);
        assert!((g.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        for i in 0..5 {
            assert_eq!(g[i], g[10 - i]);
        }
    }

    #[test]
    fn filter_valid_matches_triple_loop() {
        let dims = [5, 6, 7];
        let data: Vec<f64> = (0..210).map(|i| ((i * 37) % 11) as f64 - 5.0).collect();
        let g = [0.2, 0.5, 0.3];
        let (got, od) = filter_valid(&data, dims, &g);
        assert_eq!(od, [3, 4, 5]);
        for z in 0..3 {
            for y in 0..4 {
                for x in 0..5 {
                    let mut want = 0.0;
                    for i in 0..3 {
                        for j in 0..3 {
                            for k in 0..3 {
                                want += g[i] * g[j] * g[k] * data[((z + i) * 6 + y + j) * 7 + x + k];
                            }
                        }
                    }
                    assert!((got[(z * 4 + y) * 5 + x] - want).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn usable_scale_counts() {
        let cfg = MsSsimConfig::default();
        assert_eq!(usable_scales([10, 16, 16], &cfg), 0);
        assert_eq!(usable_scales([16, 16, 16], &cfg), 1);
        assert_eq!(usable_scales([22, 22, 22], &cfg), 2);
        assert_eq!(usable_scales([64, 64, 64], &cfg), 3);
        assert_eq!(usable_scales([256, 256, 256], &cfg), 5);
    }

    #[test]
    fn self_similarity_is_one() {
        let cfg = MsSsimConfig::default();
        let v = smooth([24, 24, 24]);
        let c = ssim_single_scale(&v, &v, &cfg).unwrap();
        assert!((c.luminance - 1.0).abs() < 1e-6);
        assert!((c.contrast_structure - 1.0).abs() < 1e-6);
        assert!((ms_ssim(&v, &v, &cfg).unwrap() - 1.0).abs() < 1e-6);
    }

    #[test]
    fn mean_shift_lowers_luminance() {
        let cfg = MsSsimConfig::default();
        let a = smooth([16, 16, 16]);
        let mut b = a.clone();
        b.data_mut().iter_mut().for_each(|v| *v += 1.5);
        let c = ssim_single_scale(&a, &b, &cfg).unwrap();
        assert!(c.luminance < 1.0);
        assert!((c.contrast_structure - 1.0).abs() < 1e-6);
    }

    #[test]
    fn monotone_in_noise() {
        let cfg = MsSsimConfig::default();
        let a = smooth([32, 32, 32]);
        let mut rng = RngState::new(11);
        let base = noise([32, 32, 32], &mut rng, 1.0, 0.0);
        let scores: Vec<f64> = [0.01f32, 0.1, 0.5]
            .iter()
            .map(|&s| {
                let mut b = a.clone();
                for (v, n) in b.data_mut().iter_mut().zip(base.data()) {
                    *v += s * n;
                }
                ms_ssim(&a, &b, &cfg).unwrap()
            })
            .collect();
        assert!(scores[0] > scores[1] && scores[1] > scores[2], "{scores:?}");
    }

    #[test]
    fn symmetric_bitwise() {
        let cfg = MsSsimConfig::default();
        let mut rng = RngState::new(12);
        let a = noise([23, 22, 24], &mut rng, 0.5, 0.1);
        let b = noise([23, 22, 24], &mut rng, 0.3, -0.1);
        assert_eq!(
            ms_ssim(&a, &b, &cfg).unwrap().to_bits(),
            ms_ssim(&b, &a, &cfg).unwrap().to_bits()
        );
    }

    #[test]
    fn axis_permutation_invariance() {
        let cfg = MsSsimConfig::default();
        let mut rng = RngState::new(13);
        let dims = [12, 14, 16];
        let a = noise(dims, &mut rng, 0.5, 0.0);
        let b = noise(dims, &mut rng, 0.5, 0.0);
        let swap = |v: &Volume3| {
            let mut out = Volume3::filled([dims[2], dims[1], dims[0]], [1.0; 3], 0.0).unwrap();
            for z in 0..dims[0] {
                for y in 0..dims[1] {
                    for x in 0..dims[2] {
                        let i = out.index(x, y, z);
                        out.data_mut()[i] = v.data()[v.index(z, y, x)];
                    }
                }
            }
            out
        };
        let s1 = ms_ssim(&a, &b, &cfg).unwrap();
        let s2 = ms_ssim(&swap(&a), &swap(&b), &cfg).unwrap();
        assert!((s1 - s2).abs() < 1e-9);
    }

    #[test]
    fn small_volume_is_an_error() {
        let v = smooth([10, 16, 16]);
        assert!(ms_ssim(&v, &v, &MsSsimConfig::default()).is_err());
        assert!(ssim_single_scale(&v, &v, &MsSsimConfig::default()).is_err());
    }

    #[test]
    fn diversity_identical_and_reproducible() {
        let cfg = MsSsimConfig::default();
        let v = smooth([16, 16, 16]);
        let same = vec![v; 6];
        assert!((diversity_ms_ssim(&same, &cfg, &mut RngState::new(1)).unwrap() - 1.0).abs() < 1e-6);

        let mut rng = RngState::new(2);
        let vols: Vec<Volume3> = (0..9).map(|_| noise([16, 16, 16], &mut rng, 0.5, 0.0)).collect();
        let d1 = diversity_ms_ssim(&vols, &cfg, &mut RngState::new(3)).unwrap();
        let d2 = diversity_ms_ssim(&vols, &cfg, &mut RngState::new(3)).unwrap();
        assert_eq!(d1.to_bits(), d2.to_bits());
        assert!(diversity_ms_ssim(&vols[..1], &cfg, &mut RngState::new(3)).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn components_are_bounded(seed in any::<u64>(), shift in -2.0f64..2.0, non_negative in any::<bool>()) {
            let cfg = MsSsimConfig::default();
            let mut rng = RngState::new(seed);
            let mut a = noise([12, 12, 12], &mut rng, 0.7, shift);
            let mut b = noise([12, 12, 12], &mut rng, 0.4, -shift);
            if non_negative {
                a.data_mut().iter_mut().for_each(|v| *v = v.abs());
                b.data_mut().iter_mut().for_each(|v| *v = v.abs());
            }
            let c = ssim_single_scale(&a, &b, &cfg).unwrap();
            prop_assert!((-1.0..=1.0).contains(&c.luminance));
            prop_assert!((-1.0..=1.0).contains(&c.contrast_structure));
            if non_negative {
                prop_assert!((0.0..=1.0).contains(&c.luminance));
            }
            let m = ms_ssim(&a, &b, &cfg).unwrap();
            prop_assert!((-1.0..=1.0).contains(&m));
        }
    }
}
