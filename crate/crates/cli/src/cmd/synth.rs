use std::path::PathBuf;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use wavediff_core::synthetic::{ellipsoid_volume, EllipsoidParams};
use wavediff_core::volume::save_volume;
use wavediff_core::RngState;

use crate::config::{dims_from, require_output_dir, resolve, Globals};
use crate::error::{CliError, CliResult};
use crate::output::emit;

#[derive(Debug, clap::Args, Serialize)]
pub struct Args {
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    count: Option<usize>,
    /// One value or D,H,W.
    #[arg(long, value_delimiter = ',')]
    #[serde(skip_serializing_if = "Option::is_none")]
    dims: Option<Vec<usize>>,
    /// Voxel spacing in mm, D,H,W.
    #[arg(long, value_delimiter = ',')]
    #[serde(skip_serializing_if = "Option::is_none")]
    spacing: Option<Vec<f64>>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct Config {
    count: usize,
    dims: Vec<usize>,
    spacing: Vec<f64>,
    seed: u64,
    output_dir: Option<PathBuf>,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            count: 4,
            dims: vec![32],
            spacing: vec![1.0, 1.0, 1.0],
            seed: 0,
            output_dir: None,
        }
    }
}

#[derive(Serialize)]
struct Summary<'a> {
    command: &'static str,
    files: Vec<String>,
    config: &'a Config,
}

pub fn run(globals: &Globals, args: Args) -> CliResult {
    let config: Config = resolve(globals, &args)?;
    let dims = dims_from(&config.dims)?;
    let spacing: [f64; 3] = config
        .spacing
        .as_slice()
        .try_into()
        .map_err(|_| CliError::Usage("--spacing takes three values".into()))?;
    let out_dir = require_output_dir(&config.output_dir)?;
    let params = EllipsoidParams::default();
    let files = (0..config.count)
        .into_par_iter()
        .map(|i| -> CliResult<String> {
            let mut rng = RngState::with_stream(config.seed, i as u64);
            let vol = ellipsoid_volume(dims, &params, &mut rng)?.with_spacing(spacing)?;
            let name = format!("synth-{i:04}");
            save_volume(&vol, out_dir.join(format!("{name}.v3r")))?;
            Ok(name)
        })
        .collect::<CliResult<Vec<_>>>()?;
    println!(
        "wrote {} synthetic volume(s) of {:?} to {} (seed {})",
        files.len(),
        dims,
        out_dir.display(),
        config.seed
    );
    emit(
        &Summary { command: "synth", files, config: &config },
        Some(&out_dir),
        "synth.json",
    )
}
