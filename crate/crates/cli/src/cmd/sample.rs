use std::path::PathBuf;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use wavediff_core::denoiser::{load_checkpoint, Denoiser};
use wavediff_core::diffusion::sample;
use wavediff_core::volume::save_volume;
use wavediff_core::{AnalyticGaussianDenoiser, NoiseSchedule, RngState};

use super::is_false;
use crate::config::{dims_from, require_output_dir, resolve, Globals};
use crate::error::{CliError, CliResult};
use crate::output::emit;

#[derive(Debug, clap::Args, Serialize)]
pub struct Args {
    /// Trained checkpoint manifest.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    checkpoint: Option<PathBuf>,
    /// Use the closed-form Gaussian posterior-mean denoiser instead of a
    /// checkpoint.
    #[arg(long)]
    #[serde(skip_serializing_if = "is_false")]
    analytic: bool,
    /// Prior mean of every coefficient (analytic mode).
    #[arg(long, allow_hyphen_values = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    mu0: Option<f64>,
    /// Prior variance of every coefficient (analytic mode).
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    var0: Option<f64>,
    /// Schedule preset (analytic mode; a checkpoint fixes its own).
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    schedule: Option<String>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    count: Option<usize>,
    /// Output volume dims (one value or D,H,W); must be even.
    #[arg(long, value_delimiter = ',')]
    #[serde(skip_serializing_if = "Option::is_none")]
    dims: Option<Vec<usize>>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct Config {
    checkpoint: Option<PathBuf>,
    analytic: bool,
    mu0: f64,
    var0: f64,
    schedule: Option<String>,
    count: usize,
    dims: Option<Vec<usize>>,
    seed: u64,
    output_dir: Option<PathBuf>,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            checkpoint: None,
            analytic: false,
            mu0: 0.0,
            var0: 1.0,
            schedule: None,
            count: 1,
            dims: None,
            seed: 0,
            output_dir: None,
        }
    }
}

#[derive(Serialize)]
struct Manifest<'a> {
    command: &'static str,
    seed: u64,
    count: usize,
    dims: [usize; 3],
    /// Rng stream of sample `i` is `streams[i]`.
    streams: Vec<u64>,
    files: Vec<String>,
    schedule: String,
    schedule_hash: String,
    source: String,
    config: &'a Config,
}

pub fn run(globals: &Globals, args: Args) -> CliResult {
    let mut config: Config = resolve(globals, &args)?;
    if config.count == 0 {
        return Err(CliError::Usage("count must be at least 1".into()));
    }
    let requested = config.dims.as_deref().map(dims_from).transpose()?;

    let (denoiser, sched, dims, source): (Box<dyn Denoiser>, Arc<NoiseSchedule>, [usize; 3], String) =
        match (&config.checkpoint, config.analytic) {
            (Some(path), false) => {
                let ckpt = load_checkpoint(path)?;
                let m = &ckpt.manifest;
                let sched = NoiseSchedule::preset(&m.schedule)?;
                if sched.hash() != m.schedule_hash {
                    return Err(CliError::Check(format!(
                        "schedule {} no longer matches the checkpoint's hash",
                        m.schedule
                    )));
                }
                if let Some(s) = &config.schedule {
                    if s != &m.schedule {
                        return Err(CliError::Usage(format!(
                            "checkpoint was trained with {}, not {s}",
                            m.schedule
                        )));
                    }
                }
                let trained = m.coeff_dims.map(|d| 2 * d);
                if let Some(req) = requested {
                    if req != trained {
                        return Err(CliError::Check(format!(
                            "requested dims {req:?} do not match the checkpoint's training dims {trained:?}"
                        )));
                    }
                }
                config.schedule = Some(m.schedule.clone());
                (Box::new(ckpt.net), Arc::new(sched), trained, format!("checkpoint:{}", path.display()))
            }
            (None, true) => {
                let name = config.schedule.get_or_insert_with(|| "linear-1000".into()).clone();
                let sched = Arc::new(NoiseSchedule::preset(&name).map_err(|e| CliError::Usage(e.to_string()))?);
                let d = AnalyticGaussianDenoiser::new(config.mu0, config.var0, sched.clone())
                    .map_err(|e| CliError::Usage(e.to_string()))?;
                let dims = requested.unwrap_or([16; 3]);
                (Box::new(d), sched, dims, format!("analytic:mu0={},var0={}", config.mu0, config.var0))
            }
            _ => {
                return Err(CliError::Usage(
                    "give exactly one of --checkpoint or --analytic".into(),
                ))
            }
        };
    if let Some(axis) = dims.iter().position(|d| d % 2 != 0 || *d == 0) {
        return Err(CliError::Usage(format!(
            "dims must be even and positive, got {} on axis {}",
            dims[axis],
            ["D", "H", "W"][axis]
        )));
    }
    config.dims = Some(dims.to_vec());
    let out_dir = require_output_dir(&config.output_dir)?;
    let half = dims.map(|d| d / 2);
    let streams: Vec<u64> = (0..config.count as u64).collect();
    println!(
        "sampling {} volume(s) of {:?} with {} ({} steps), seed {}",
        config.count,
        dims,
        source,
        sched.len(),
        config.seed
    );
    let files = streams
        .par_iter()
        .map(|&stream| -> CliResult<String> {
            let mut rng = RngState::with_stream(config.seed, stream);
            let vol = sample(denoiser.as_ref(), half, &sched, &mut rng)?;
            vol.ensure_finite()?;
            if vol.dims() != dims {
                return Err(CliError::Check(format!("sample has dims {:?}", vol.dims())));
            }
            let name = format!("sample-{stream:04}");
            save_volume(&vol, out_dir.join(format!("{name}.v3r")))?;
            Ok(name)
        })
        .collect::<CliResult<Vec<_>>>()?;
    let manifest = Manifest {
        command: "sample",
        seed: config.seed,
        count: config.count,
        dims,
        streams,
        files,
        schedule: sched.name().to_string(),
        schedule_hash: sched.hash(),
        source,
        config: &config,
    };
    emit(&manifest, Some(&out_dir), "manifest.json")
}
