use std::path::PathBuf;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use wavediff_core::volume::avg_pool2;
use wavediff_core::wavelet::{dwt3, idwt3};
use wavediff_core::{RngState, Volume3};

use super::is_false;
use crate::config::{dims_from, resolve, Globals};
use crate::error::{CliError, CliResult};
use crate::output::emit;

/// Per-voxel slowdown at doubled dims above which a warning is printed.
const SCALING_LIMIT: f64 = 4.0;

#[derive(Debug, clap::Args, Serialize)]
pub struct Args {
    /// One value or D,H,W; every axis even and at least 2.
    #[arg(long, value_delimiter = ',')]
    #[serde(skip_serializing_if = "Option::is_none")]
    dims: Option<Vec<usize>>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    reps: Option<usize>,
    /// Also time at doubled dims and compare per-voxel throughput.
    #[arg(long)]
    #[serde(skip_serializing_if = "is_false")]
    scaling: bool,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct Config {
    dims: Vec<usize>,
    reps: usize,
    scaling: bool,
    seed: u64,
    output_dir: Option<PathBuf>,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            dims: vec![64],
            reps: 10,
            scaling: false,
            seed: 0,
            output_dir: None,
        }
    }
}

#[derive(Debug, Serialize)]
struct OpTiming {
    op: &'static str,
    median_seconds: f64,
    voxels_per_second: f64,
}

#[derive(Serialize)]
struct Scaling {
    dims: [usize; 3],
    ops: Vec<OpTiming>,
    /// Per-voxel time at doubled dims over per-voxel time at base dims.
    slowdown: Vec<(&'static str, f64)>,
    warnings: Vec<String>,
}

#[derive(Serialize)]
struct Report<'a> {
    command: &'static str,
    dims: [usize; 3],
    reps: usize,
    threads: usize,
    ops: Vec<OpTiming>,
    scaling: Option<Scaling>,
    config: &'a Config,
}

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        0.5 * (xs[n / 2 - 1] + xs[n / 2])
    }
}

fn time_reps(reps: usize, mut f: impl FnMut()) -> f64 {
    f();
    median(
        (0..reps)
            .map(|_| {
                let t = Instant::now();
                f();
                t.elapsed().as_secs_f64()
            })
            .collect(),
    )
}

fn time_ops(dims: [usize; 3], reps: usize, seed: u64) -> CliResult<Vec<OpTiming>> {
    let mut data = vec![0f32; dims.iter().product()];
    RngState::new(seed).fill_normal(&mut data);
    let vol = Volume3::new(dims, [1.0; 3], data)?;
    let coeffs = dwt3(&vol)?;
    let voxels = vol.len() as f64;
    let entry = |op, s: f64| OpTiming {
        op,
        median_seconds: s,
        voxels_per_second: voxels / s.max(1e-12),
    };
    Ok(vec![
        entry("dwt3", time_reps(reps, || drop(std::hint::black_box(dwt3(&vol))))),
        entry("idwt3", time_reps(reps, || drop(std::hint::black_box(idwt3(&coeffs))))),
        entry("avg_pool2", time_reps(reps, || drop(std::hint::black_box(avg_pool2(&vol))))),
    ])
}

pub fn run(globals: &Globals, args: Args) -> CliResult {
    let config: Config = resolve(globals, &args)?;
    let dims = dims_from(&config.dims)?;
    if dims.iter().any(|&d| d < 2 || d % 2 != 0) {
        return Err(CliError::Usage(format!(
            "bench dims must be even and at least 2 on every axis, got {dims:?}"
        )));
    }
    if config.reps == 0 {
        return Err(CliError::Usage("reps must be at least 1".into()));
    }
    let ops = time_ops(dims, config.reps, config.seed)?;
    for o in &ops {
        println!(
            "{:<10} median {:.3} ms  {:.1} Mvoxel/s",
            o.op,
            o.median_seconds * 1e3,
            o.voxels_per_second / 1e6
        );
    }
    let scaling = if config.scaling {
        let big = dims.map(|d| 2 * d);
        let big_ops = time_ops(big, config.reps, config.seed)?;
        let mut warnings = Vec::new();
        let slowdown: Vec<(&'static str, f64)> = ops
            .iter()
            .zip(&big_ops)
            .map(|(a, b)| (a.op, a.voxels_per_second / b.voxels_per_second))
            .collect();
        for (op, s) in &slowdown {
            println!("{op:<10} per-voxel slowdown at {big:?}: {s:.2}x");
            if *s > SCALING_LIMIT {
                let w = format!("{op}: per-voxel time grows {s:.2}x from {dims:?} to {big:?}");
                eprintln!("warning: {w}");
                warnings.push(w);
            }
        }
        Some(Scaling { dims: big, ops: big_ops, slowdown, warnings })
    } else {
        None
    };
    let report = Report {
        command: "bench",
        dims,
        reps: config.reps,
        threads: rayon::current_num_threads(),
        ops,
        scaling,
        config: &config,
    };
    if let Some(dir) = &config.output_dir {
        std::fs::create_dir_all(dir).map_err(|e| CliError::Other(format!("{}: {e}", dir.display())))?;
    }
    emit(&report, config.output_dir.as_deref(), "bench.json")
}
