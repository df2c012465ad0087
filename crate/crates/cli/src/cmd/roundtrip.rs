use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use wavediff_core::volume::load_volume;
use wavediff_core::wavelet::{dwt3, idwt3};

use crate::config::{resolve, Globals};
use crate::error::{CliError, CliResult};
use crate::output::emit;

const TOLERANCE: f64 = 1e-5;

#[derive(Debug, clap::Args, Serialize)]
pub struct Args {
    /// Volume header (`.v3r.json`) or stem.
    #[serde(skip_serializing_if = "Option::is_none")]
    volume: Option<PathBuf>,
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct Config {
    volume: Option<PathBuf>,
    output_dir: Option<PathBuf>,
}

#[derive(Serialize)]
struct Report {
    command: &'static str,
    volume: PathBuf,
    dims: [usize; 3],
    max_abs_error: f64,
    /// `max_abs_error / max(1, max|y|)`; this is what the check compares.
    scaled_error: f64,
    energy_ratio: f64,
    tolerance: f64,
    passed: bool,
}

pub fn run(globals: &Globals, args: Args) -> CliResult {
    let config: Config = resolve(globals, &args)?;
    let path = config
        .volume
        .clone()
        .ok_or_else(|| CliError::Usage("a volume path is required".into()))?;
    let vol = load_volume(&path)?;
    let coeffs = dwt3(&vol)?;
    let back = idwt3(&coeffs)?;
    let mut max_err = 0f64;
    let mut peak = 0f64;
    for (a, b) in vol.data().iter().zip(back.data()) {
        max_err = max_err.max((*a as f64 - *b as f64).abs());
        peak = peak.max((*a as f64).abs());
    }
    let energy_in = vol.sum_squares();
    let energy_out = coeffs.as_field().sum_squares();
    let energy_ratio = if energy_in == 0.0 {
        if energy_out == 0.0 { 1.0 } else { f64::INFINITY }
    } else {
        energy_out / energy_in
    };
    let scaled_error = max_err / peak.max(1.0);
    let passed = scaled_error < TOLERANCE && (energy_ratio - 1.0).abs() < TOLERANCE;
    println!("volume {} dims {:?}", path.display(), vol.dims());
    println!("max abs reconstruction error {max_err:e}");
    println!("coefficient/volume energy ratio {energy_ratio:.9}");
    let report = Report {
        command: "roundtrip-check",
        volume: path,
        dims: vol.dims(),
        max_abs_error: max_err,
        scaled_error,
        energy_ratio,
        tolerance: TOLERANCE,
        passed,
    };
    emit(&report, config.output_dir.as_deref(), "roundtrip.json")?;
    if passed {
        Ok(())
    } else {
        Err(CliError::Check(format!(
            "reconstruction error {scaled_error:e} or energy ratio {energy_ratio} outside {TOLERANCE:e}"
        )))
    }
}
