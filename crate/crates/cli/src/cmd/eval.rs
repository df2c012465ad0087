use std::path::{Path, PathBuf};

use clap::ValueEnum;
use serde::{Deserialize, Serialize};
use wavediff_core::metrics::{
    diversity_ms_ssim, feature_stats, frechet_distance, json_hash, read_features_csv, toy_features,
    MetricRecord, TOY_FEATURE_NAMES,
};
use wavediff_core::volume::load_volume;
use wavediff_core::{MsSsimConfig, RngState, Volume3};

use super::is_false;
use crate::config::{list_volumes, resolve, Globals};
use crate::error::{CliError, CliResult};
use crate::output::emit;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Diversity,
    Frechet,
}

#[derive(Debug, clap::Args, Serialize)]
pub struct Args {
    #[arg(long, value_enum)]
    #[serde(skip_serializing_if = "Option::is_none")]
    mode: Option<Mode>,
    /// Directory of sample volumes.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    samples_dir: Option<PathBuf>,
    /// Frechet: reference volumes, compared through the toy features.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    reference_dir: Option<PathBuf>,
    /// Frechet: use global mean, variance and per-axis gradient energy as
    /// features.
    #[arg(long)]
    #[serde(skip_serializing_if = "is_false")]
    toy_features: bool,
    /// Frechet: feature CSV (header row, one vector per row) for side A.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    features_a: Option<PathBuf>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    features_b: Option<PathBuf>,
    /// Diversity: intensity range for the SSIM constants.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    data_range: Option<f64>,
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct Config {
    mode: Option<Mode>,
    samples_dir: Option<PathBuf>,
    reference_dir: Option<PathBuf>,
    toy_features: bool,
    features_a: Option<PathBuf>,
    features_b: Option<PathBuf>,
    data_range: Option<f64>,
    ms_ssim: MsSsimConfig,
    seed: u64,
    output_dir: Option<PathBuf>,
}

fn load_dir(dir: &Path) -> CliResult<Vec<Volume3>> {
    list_volumes(dir)?
        .iter()
        .map(|p| load_volume(p).map_err(CliError::from))
        .collect()
}

fn require<'a>(p: &'a Option<PathBuf>, flag: &str) -> CliResult<&'a PathBuf> {
    p.as_ref().ok_or_else(|| CliError::Usage(format!("{flag} is required")))
}

fn diversity(config: &mut Config) -> CliResult<MetricRecord> {
    if let Some(r) = config.data_range {
        config.ms_ssim.data_range = r;
    }
    config.ms_ssim.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    let dir = require(&config.samples_dir, "--samples-dir")?;
    let samples = load_dir(dir)?;
    if samples.len() < 2 {
        return Err(CliError::Check(format!(
            "diversity needs at least 2 samples, found {} in {}",
            samples.len(),
            dir.display()
        )));
    }
    let value = diversity_ms_ssim(&samples, &config.ms_ssim, &mut RngState::new(config.seed))?;
    println!(
        "diversity (mean MS-SSIM over {} disjoint pairs of {} samples): {value:.6}",
        samples.len() / 2,
        samples.len()
    );
    Ok(MetricRecord {
        metric: "diversity_ms_ssim".into(),
        value,
        n: samples.len(),
        config_hash: config.ms_ssim.hash(),
        seed: Some(config.seed),
    })
}

fn frechet(config: &Config) -> CliResult<MetricRecord> {
    let (a, b, source) = if config.toy_features {
        let a: Vec<Vec<f64>> = load_dir(require(&config.samples_dir, "--samples-dir")?)?
            .iter()
            .map(toy_features)
            .collect();
        let b: Vec<Vec<f64>> = load_dir(require(&config.reference_dir, "--reference-dir")?)?
            .iter()
            .map(toy_features)
            .collect();
        (a, b, serde_json::json!({ "features": "toy", "names": TOY_FEATURE_NAMES }))
    } else {
        let pa = require(&config.features_a, "--features-a (or --toy-features)")?;
        let pb = require(&config.features_b, "--features-b")?;
        (
            read_features_csv(pa)?,
            read_features_csv(pb)?,
            serde_json::json!({ "features": "csv" }),
        )
    };
    for (side, f) in [("A", &a), ("B", &b)] {
        if f.len() < 2 {
            return Err(CliError::Check(format!(
                "side {side} has {} feature vector(s); need at least 2",
                f.len()
            )));
        }
    }
    let sa = feature_stats(&a)?;
    let sb = feature_stats(&b)?;
    let value = frechet_distance(&sa, &sb)?;
    println!(
        "Frechet distance between {} and {} feature vectors of dimension {}: {value:.6e}",
        a.len(),
        b.len(),
        sa.dim()
    );
    Ok(MetricRecord {
        metric: "frechet_distance".into(),
        value,
        n: a.len(),
        config_hash: json_hash(&source),
        seed: Some(config.seed),
    })
}

pub fn run(globals: &Globals, args: Args) -> CliResult {
    let mut config: Config = resolve(globals, &args)?;
    let record = match config.mode {
        Some(Mode::Diversity) => diversity(&mut config)?,
        Some(Mode::Frechet) => frechet(&config)?,
        None => return Err(CliError::Usage("--mode diversity|frechet is required".into())),
    };
    if let Some(dir) = &config.output_dir {
        std::fs::create_dir_all(dir).map_err(|e| CliError::Other(format!("{}: {e}", dir.display())))?;
    }
    emit(&record, config.output_dir.as_deref(), "eval.json")
}
