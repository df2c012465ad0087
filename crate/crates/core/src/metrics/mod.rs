//! Fréchet distance between Gaussian feature summaries and 3D MS-SSIM.

mod features;
mod frechet;
mod ssim;

pub use features::{read_features_csv, toy_features, write_features_csv, TOY_FEATURE_NAMES};
pub use frechet::{feature_stats, frechet_distance, FeatureStats};
pub use ssim::{
    diversity_ms_ssim, ms_ssim, ssim_single_scale, usable_scales, MsSsimConfig, SsimComponents,
};

use serde::Serialize;
use sha2::{Digest, Sha256};

/// Machine-readable metric result.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricRecord {
    pub metric: String,
    pub value: f64,
    pub n: usize,
    pub config_hash: String,
    pub seed: Option<u64>,
}

/// SHA-256 of the compact JSON form of `value`, hex encoded.
pub fn json_hash<T: Serialize + ?Sized>(value: &T) -> String {
    let json = serde_json::to_string(value).expect("value serializes to JSON");
    hex::encode(Sha256::digest(json.as_bytes()))
}

/// Sum in a fixed binary tree so the result does not depend on how the
/// inputs were produced.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    match values.len() {
        0 => 0.0,
        1 => values[0],
        n => {
            let (a, b) = values.split_at(n / 2);
            pairwise_sum(a) + pairwise_sum(b)
        }
    }
}
