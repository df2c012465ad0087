//! Intensity clipping, resampling, padding/cropping, normalization and
//! pooling, plus the fixed-order pipeline that chains them.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::Volume3;
use crate::error::{Error, Result, AXIS_NAMES};

/// Value at nearest rank `ceil(pct/100 * n)` (1-based, clamped to `1..=n`).
///
/// `values` is reordered in place.
pub fn nearest_rank(values: &mut [f32], pct: f64) -> f32 {
    let n = values.len();
    assert!(n > 0);
    // Snap products like 999.0000000000001 back to the integer they denote.
    let r = pct / 100.0 * n as f64;
    let rank = if (r - r.round()).abs() < 1e-9 { r.round() } else { r.ceil() } as usize;
    let idx = rank.clamp(1, n) - 1;
    let (_, v, _) = values.select_nth_unstable_by(idx, f32::total_cmp);
    *v
}

pub fn clip_percentiles(vol: &Volume3, lower_pct: f64, upper_pct: f64) -> Result<Volume3> {
    if !(0.0..100.0).contains(&lower_pct) || !(upper_pct > lower_pct && upper_pct <= 100.0) {
        return Err(Error::InvalidArgument(format!(
            "percentiles must satisfy 0 <= lower < upper <= 100, got {lower_pct}, {upper_pct}"
        )));
    }
    let mut scratch = vol.data().to_vec();
    let lo = nearest_rank(&mut scratch, lower_pct);
    let hi = nearest_rank(&mut scratch, upper_pct);
    Ok(vol.map(|v| v.clamp(lo, hi)))
}

pub fn clip_floor(vol: &Volume3, floor: f32) -> Result<Volume3> {
    if !floor.is_finite() {
        return Err(Error::InvalidArgument(format!("floor must be finite, got {floor}")));
    }
    Ok(vol.map(|v| v.max(floor)))
}

/// Trilinear resampling onto an isotropic grid of `target_spacing` mm.
///
/// Output voxel centres are mapped into the input's physical frame; sample
/// positions outside the input lattice clamp to the boundary.
pub fn resample_isotropic(vol: &Volume3, target_spacing: f64) -> Result<Volume3> {
    if !(target_spacing.is_finite() && target_spacing > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "target spacing must be positive, got {target_spacing}"
        )));
    }
    let in_dims = vol.dims();
    let spacing = vol.spacing();
    let mut out_dims = [0usize; 3];
    for a in 0..3 {
        out_dims[a] = ((in_dims[a] as f64 * spacing[a] / target_spacing).round() as usize).max(1);
    }

    // Per-axis (lower index, upper index, weight of upper) for every output sample.
    let taps: Vec<Vec<(usize, usize, f64)>> = (0..3)
        .map(|a| {
            let n = in_dims[a];
            (0..out_dims[a])
                .map(|i| {
                    let pos = (i as f64 + 0.5) * target_spacing / spacing[a] - 0.5;
                    let pos = pos.clamp(0.0, (n - 1) as f64);
                    let i0 = pos.floor() as usize;
                    let i1 = (i0 + 1).min(n - 1);
                    (i0, i1, pos - i0 as f64)
                })
                .collect()
        })
        .collect();

    let plane = out_dims[1] * out_dims[2];
    let mut data = vec![0f32; out_dims.iter().product()];
    data.par_chunks_mut(plane).enumerate().for_each(|(z, slab)| {
        let (z0, z1, fz) = taps[0][z];
        for (y, row) in slab.chunks_mut(out_dims[2]).enumerate() {
            let (y0, y1, fy) = taps[1][y];
            for (x, out) in row.iter_mut().enumerate() {
                let (x0, x1, fx) = taps[2][x];
                let at = |zz, yy, xx| vol.get(zz, yy, xx) as f64;
                let c00 = at(z0, y0, x0) * (1.0 - fx) + at(z0, y0, x1) * fx;
                let c01 = at(z0, y1, x0) * (1.0 - fx) + at(z0, y1, x1) * fx;
                let c10 = at(z1, y0, x0) * (1.0 - fx) + at(z1, y0, x1) * fx;
                let c11 = at(z1, y1, x0) * (1.0 - fx) + at(z1, y1, x1) * fx;
                let c0 = c00 * (1.0 - fy) + c01 * fy;
                let c1 = c10 * (1.0 - fy) + c11 * fy;
                *out = (c0 * (1.0 - fz) + c1 * fz) as f32;
            }
        }
    });
    Volume3::new(out_dims, [target_spacing; 3], data)
}

/// Copies the box of `src` starting at `src_off` with extent `extent` into
/// `dst` at `dst_off`.
fn copy_box(
    src: &Volume3,
    src_off: [usize; 3],
    dst: &mut Volume3,
    dst_off: [usize; 3],
    extent: [usize; 3],
) {
    for z in 0..extent[0] {
        for y in 0..extent[1] {
            let s = src.index(src_off[0] + z, src_off[1] + y, src_off[2]);
            let d = dst.index(dst_off[0] + z, dst_off[1] + y, dst_off[2]);
            let row = &src.data()[s..s + extent[2]];
            dst.data_mut()[d..d + extent[2]].copy_from_slice(row);
        }
    }
}

/// Centres `vol` in a zero volume of `target` dims (offset `floor(diff/2)`).
pub fn zero_pad_to(vol: &Volume3, target: [usize; 3]) -> Result<Volume3> {
    let dims = vol.dims();
    let mut off = [0usize; 3];
    for a in 0..3 {
        if target[a] < dims[a] {
            return Err(Error::Shape(format!(
                "pad target {} smaller than input {} on axis {}",
                target[a], dims[a], AXIS_NAMES[a]
            )));
        }
        off[a] = (target[a] - dims[a]) / 2;
    }
    let mut out = Volume3::filled(target, vol.spacing(), 0.0)?;
    copy_box(vol, [0; 3], &mut out, off, dims);
    Ok(out)
}

/// Extracts the centred `target` box (offset `floor(diff/2)`).
pub fn center_crop(vol: &Volume3, target: [usize; 3]) -> Result<Volume3> {
    let dims = vol.dims();
    let mut off = [0usize; 3];
    for a in 0..3 {
        if target[a] > dims[a] || target[a] == 0 {
            return Err(Error::Shape(format!(
                "crop target {} not within input {} on axis {}",
                target[a], dims[a], AXIS_NAMES[a]
            )));
        }
        off[a] = (dims[a] - target[a]) / 2;
    }
    let mut out = Volume3::filled(target, vol.spacing(), 0.0)?;
    copy_box(vol, off, &mut out, [0; 3], target);
    Ok(out)
}

/// Crops axes that exceed `target`, then zero-pads axes that fall short.
pub fn pad_or_crop(vol: &Volume3, target: [usize; 3]) -> Result<Volume3> {
    let dims = vol.dims();
    let crop: [usize; 3] = std::array::from_fn(|a| dims[a].min(target[a]));
    let cropped = if crop == dims {
        vol.clone()
    } else {
        center_crop(vol, crop)?
    };
    if crop == target {
        Ok(cropped)
    } else {
        zero_pad_to(&cropped, target)
    }
}

/// Affine map of `[min, max]` onto `[lo, hi]`; constant input maps to the
/// midpoint.
pub fn normalize_to_range(vol: &Volume3, lo: f32, hi: f32) -> Result<Volume3> {
    if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "normalize range requires lo < hi, got [{lo}, {hi}]"
        )));
    }
    let (min, max) = vol.min_max();
    if min == max {
        let mid = ((lo as f64 + hi as f64) / 2.0) as f32;
        return Ok(vol.map(|_| mid));
    }
    let scale = (hi as f64 - lo as f64) / (max as f64 - min as f64);
    Ok(vol.map(|v| {
        if v == max {
            hi
        } else {
            ((lo as f64 + (v as f64 - min as f64) * scale) as f32).clamp(lo, hi)
        }
    }))
}

/// Mean over non-overlapping 2×2×2 blocks; spacing doubles.
pub fn avg_pool2(vol: &Volume3) -> Result<Volume3> {
    vol.ensure_even_dims()?;
    let [d, h, w] = vol.dims();
    let out_dims = [d / 2, h / 2, w / 2];
    let plane = out_dims[1] * out_dims[2];
    let mut data = vec![0f32; out_dims.iter().product()];
    data.par_chunks_mut(plane).enumerate().for_each(|(z, slab)| {
        for y in 0..out_dims[1] {
            for x in 0..out_dims[2] {
                let mut acc = 0f64;
                for dz in 0..2 {
                    for dy in 0..2 {
                        let i = vol.index(2 * z + dz, 2 * y + dy, 2 * x);
                        acc += vol.data()[i] as f64 + vol.data()[i + 1] as f64;
                    }
                }
                slab[y * out_dims[2] + x] = (acc / 8.0) as f32;
            }
        }
    });
    let s = vol.spacing();
    Volume3::new(out_dims, [s[0] * 2.0, s[1] * 2.0, s[2] * 2.0], data)
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PreprocessRecipe {
    #[serde(default)]
    pub clip_floor: Option<f32>,
    #[serde(default)]
    pub clip_lower_pct: Option<f64>,
    #[serde(default)]
    pub clip_upper_pct: Option<f64>,
    #[serde(default)]
    pub resample_spacing: Option<f64>,
    #[serde(default)]
    pub pad_or_crop_target: Option<[usize; 3]>,
    #[serde(default)]
    pub normalize_range: Option<(f32, f32)>,
    #[serde(default)]
    pub downsample_halvings: u32,
}

impl PreprocessRecipe {
    pub const PRESET_NAMES: [&'static str; 4] = ["brats", "brats-128", "lidc", "lidc-128"];

    /// Brain MR: clip the lower and upper 0.1 percentiles, zero-pad to 256³,
    /// normalize to [−1, 1].
    pub fn brats() -> Self {
        Self {
            clip_lower_pct: Some(0.1),
            clip_upper_pct: Some(99.9),
            pad_or_crop_target: Some([256; 3]),
            normalize_range: Some((-1.0, 1.0)),
            ..Self::default()
        }
    }

    /// Lung CT: floor-clip at −1000 HU, clip the upper 0.1 percentile,
    /// resample to 1 mm isotropic, centre-crop to 256³, normalize to [−1, 1].
    pub fn lidc() -> Self {
        Self {
            clip_floor: Some(-1000.0),
            clip_upper_pct: Some(99.9),
            resample_spacing: Some(1.0),
            pad_or_crop_target: Some([256; 3]),
            normalize_range: Some((-1.0, 1.0)),
            ..Self::default()
        }
    }

    pub fn preset(name: &str) -> Option<Self> {
        match name {
            "brats" => Some(Self::brats()),
            "brats-128" => Some(Self::brats().with_halvings(1)),
            "lidc" => Some(Self::lidc()),
            "lidc-128" => Some(Self::lidc().with_halvings(1)),
            _ => None,
        }
    }

    pub fn with_halvings(mut self, halvings: u32) -> Self {
        self.downsample_halvings = halvings;
        self
    }

    pub fn with_target(mut self, target: [usize; 3]) -> Self {
        self.pad_or_crop_target = Some(target);
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if let Some(f) = self.clip_floor {
            if !f.is_finite() {
                return bad(format!("clip_floor must be finite, got {f}"));
            }
        }
        if let Some(p) = self.clip_lower_pct {
            if !(0.0..100.0).contains(&p) {
                return bad(format!("clip_lower_pct must be in [0, 100), got {p}"));
            }
        }
        if let Some(p) = self.clip_upper_pct {
            if !(p > 0.0 && p <= 100.0) {
                return bad(format!("clip_upper_pct must be in (0, 100], got {p}"));
            }
        }
        if let (Some(l), Some(u)) = (self.clip_lower_pct, self.clip_upper_pct) {
            if l >= u {
                return bad(format!("clip_lower_pct {l} must be below clip_upper_pct {u}"));
            }
        }
        if let Some(s) = self.resample_spacing {
            if !(s.is_finite() && s > 0.0) {
                return bad(format!("resample_spacing must be positive, got {s}"));
            }
        }
        if let Some(t) = self.pad_or_crop_target {
            if t.contains(&0) {
                return bad("pad_or_crop_target has a zero extent".into());
            }
        }
        if let Some((lo, hi)) = self.normalize_range {
            if !(lo < hi) {
                return bad(format!("normalize_range requires lo < hi, got ({lo}, {hi})"));
            }
        }
        Ok(())
    }
}

/// Runs the recipe in fixed order: floor-clip, percentile-clip, resample,
/// pad-or-crop, normalize, then `downsample_halvings` rounds of [`avg_pool2`].
pub fn apply_recipe(vol: &Volume3, recipe: &PreprocessRecipe) -> Result<Volume3> {
    recipe.validate()?;
    let mut v = vol.clone();
    if let Some(floor) = recipe.clip_floor {
        v = clip_floor(&v, floor)?;
    }
    if recipe.clip_lower_pct.is_some() || recipe.clip_upper_pct.is_some() {
        v = clip_percentiles(
            &v,
            recipe.clip_lower_pct.unwrap_or(0.0),
            recipe.clip_upper_pct.unwrap_or(100.0),
        )?;
    }
    if let Some(s) = recipe.resample_spacing {
        v = resample_isotropic(&v, s)?;
    }
    if let Some(t) = recipe.pad_or_crop_target {
        v = pad_or_crop(&v, t)?;
    }
    if let Some((lo, hi)) = recipe.normalize_range {
        v = normalize_to_range(&v, lo, hi)?;
    }
    for _ in 0..recipe.downsample_halvings {
        v = avg_pool2(&v)?;
    }
    v.ensure_finite()?;
    Ok(v)
}
