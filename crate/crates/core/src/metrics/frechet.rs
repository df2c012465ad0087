use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

const EIGEN_EPS: f64 = 1e-14;
const EIGEN_MAX_ITER: usize = 10_000;

/// Mean and unbiased covariance of a set of feature vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureStats {
    pub n: usize,
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
}

impl FeatureStats {
    /// Builds stats from known moments. `cov` is symmetrized.
    pub fn from_moments(n: usize, mean: Vec<f64>, cov: DMatrix<f64>) -> Result<Self> {
        let d = mean.len();
        if cov.nrows() != d || cov.ncols() != d {
            return Err(Error::Shape(format!(
                "covariance is {}x{}, mean has {d} entries",
                cov.nrows(),
                cov.ncols()
            )));
        }
        let cov = (&cov + cov.transpose()) * 0.5;
        Ok(Self {
            n,
            mean: DVector::from_vec(mean),
            cov,
        })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }
}

pub fn feature_stats(features: &[Vec<f64>]) -> Result<FeatureStats> {
    let n = features.len();
    if n < 2 {
        return Err(Error::InvalidArgument(format!(
            "need at least 2 feature vectors, got {n}"
        )));
    }
    let d = features[0].len();
    if d == 0 {
        return Err(Error::Shape("feature vectors are empty".into()));
    }
    if let Some((i, f)) = features.iter().enumerate().find(|(_, f)| f.len() != d) {
        return Err(Error::Shape(format!(
            "feature vector {i} has {} entries, expected {d}",
            f.len()
        )));
    }
    if features.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("non-finite feature value".into()));
    }
    let mut mean = DVector::zeros(d);
    for f in features {
        mean += DVector::from_column_slice(f);
    }
    mean /= n as f64;
    let mut cov = DMatrix::zeros(d, d);
    for f in features {
        let c = DVector::from_column_slice(f) - &mean;
        cov.ger(1.0, &c, &c, 1.0);
    }
    cov /= (n - 1) as f64;
    let cov = (&cov + cov.transpose()) * 0.5;
    Ok(FeatureStats { n, mean, cov })
}

fn eigen(m: DMatrix<f64>) -> Result<SymmetricEigen<f64, nalgebra::Dyn>> {
    SymmetricEigen::try_new(m, EIGEN_EPS, EIGEN_MAX_ITER).ok_or(Error::Eigen)
}

/// Square roots of PSD eigenvalues; values within round-off of zero (relative
/// to the largest) are treated as zero.
fn sqrt_eigenvalues(vals: &DVector<f64>) -> DVector<f64> {
    let scale = vals.iter().fold(0.0f64, |m, l| m.max(l.abs()));
    let floor = scale * f64::EPSILON * vals.len() as f64;
    vals.map(|l| if l <= floor { 0.0 } else { l.sqrt() })
}

fn sqrt_psd(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let e = eigen(m.clone())?;
    let vals = sqrt_eigenvalues(&e.eigenvalues);
    let out = &e.eigenvectors * DMatrix::from_diagonal(&vals) * e.eigenvectors.transpose();
    Ok((&out + out.transpose()) * 0.5)
}

/// `‖μa − μb‖² + tr(Σa + Σb − 2(Σa Σb)^½)`, clamped at 0.
///
/// The trace of `(Σa Σb)^½` is taken from the eigenvalues of the symmetric
/// matrix `Σa^½ Σb Σa^½`, which is similar to `Σa Σb`.
pub fn frechet_distance(a: &FeatureStats, b: &FeatureStats) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::Shape(format!(
            "feature dimensions differ: {} vs {}",
            a.dim(),
            b.dim()
        )));
    }
    let dmu = (&a.mean - &b.mean).norm_squared();
    let sa = sqrt_psd(&a.cov)?;
    let m = &sa * &b.cov * &sa;
    let m = (&m + m.transpose()) * 0.5;
    let tr_sqrt = sqrt_eigenvalues(&eigen(m)?.eigenvalues).sum();
    let d = dmu + a.cov.trace() + b.cov.trace() - 2.0 * tr_sqrt;
    Ok(d.max(0.0))
}
