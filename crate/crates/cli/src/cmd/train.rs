//! Checkpoints are written every `checkpoint_every` iterations and at the
//! end, as `checkpoints/ckpt-<iteration>.json` plus a `.bin` blob. The newest
//! `keep_last` are kept; `checkpoints/best.json` holds the checkpoint whose
//! mean loss since the previous checkpoint was lowest.
//!
//! Iteration `i` draws its batch, timesteps and noise from rng stream `i`
//! of the seed, so a resumed run continues bit-for-bit.

use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use wavediff_core::denoiser::{
    load_checkpoint, save_checkpoint, Adam, Checkpoint, CheckpointMeta, NetConfig, TinyConvDenoiser,
};
use wavediff_core::diffusion::train_step;
use wavediff_core::presets::HyperPreset;
use wavediff_core::synthetic::ellipsoid_dataset;
use wavediff_core::volume::load_volume;
use wavediff_core::wavelet::dwt3;
use wavediff_core::{Error, Field, NoiseSchedule, RngState, Volume3};

use super::is_false;
use crate::config::{dims_from, list_volumes, require_output_dir, resolve, Globals};
use crate::error::{CliError, CliResult};
use crate::output::{emit, write_json};

const INIT_STREAM: u64 = u64::MAX;
const LOSS_HEADER: &str = "iteration,t_mean,loss";

#[derive(Debug, clap::Args, Serialize)]
#[command(after_help = "Checkpoints: every --checkpoint-every iterations and at the end; the \
newest --keep-last are retained plus checkpoints/best.json (lowest mean loss over a \
checkpoint interval). Resume with --resume <checkpoint.json>.")]
pub struct Args {
    /// Directory of training volumes; without it the bundled ellipsoid
    /// generator is used.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    data_dir: Option<PathBuf>,
    /// Number of generated volumes when no data dir is given.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    synthetic_count: Option<usize>,
    /// Generated volume dims (one value or D,H,W).
    #[arg(long, value_delimiter = ',')]
    #[serde(skip_serializing_if = "Option::is_none")]
    dims: Option<Vec<usize>>,
    /// desk, paper or paper-256.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    preset: Option<String>,
    /// Required to train with a paper-scale preset.
    #[arg(long)]
    #[serde(skip_serializing_if = "is_false")]
    allow_paper_preset: bool,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    schedule: Option<String>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    base_channels: Option<usize>,
    /// Use the wavelet down/up variant of the network.
    #[arg(long)]
    #[serde(skip_serializing_if = "is_false")]
    wavelet: bool,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    lr: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    batch_size: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    iterations: Option<u64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    checkpoint_every: Option<u64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    keep_last: Option<usize>,
    /// Checkpoint manifest to continue from.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    resume: Option<PathBuf>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct Config {
    data_dir: Option<PathBuf>,
    synthetic_count: usize,
    dims: Vec<usize>,
    preset: String,
    allow_paper_preset: bool,
    schedule: Option<String>,
    base_channels: Option<usize>,
    wavelet: bool,
    lr: Option<f64>,
    batch_size: Option<usize>,
    iterations: Option<u64>,
    checkpoint_every: u64,
    keep_last: usize,
    resume: Option<PathBuf>,
    seed: u64,
    output_dir: Option<PathBuf>,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            data_dir: None,
            synthetic_count: 16,
            dims: vec![16],
            preset: "desk".into(),
            allow_paper_preset: false,
            schedule: None,
            base_channels: None,
            wavelet: false,
            lr: None,
            batch_size: None,
            iterations: None,
            checkpoint_every: 50,
            keep_last: 3,
            resume: None,
            seed: 0,
            output_dir: None,
        }
    }
}

/// Config with every preset-derived value filled in. Serializes as the
/// filled-in [`Config`].
#[derive(Debug, Clone, Serialize)]
struct Resolved {
    #[serde(flatten)]
    config: Config,
    #[serde(skip)]
    schedule: String,
    #[serde(skip)]
    base_channels: usize,
    #[serde(skip)]
    lr: f64,
    #[serde(skip)]
    batch_size: usize,
    #[serde(skip)]
    iterations: u64,
}

fn resolve_config(config: Config) -> CliResult<Resolved> {
    let preset = HyperPreset::by_name(&config.preset).map_err(|e| CliError::Usage(e.to_string()))?;
    if !preset.desk_trainable && !config.allow_paper_preset {
        return Err(CliError::Usage(format!(
            "preset {:?} records the published hardware-scale settings (C={}, batch {}, {} iterations) \
             and is not meant for CPU training; pass --allow-paper-preset to run it anyway",
            preset.name, preset.base_channels, preset.batch_size, preset.iterations
        )));
    }
    let mut config = config;
    let schedule = config.schedule.get_or_insert_with(|| preset.schedule.to_string()).clone();
    let r = Resolved {
        schedule,
        base_channels: *config.base_channels.get_or_insert(preset.base_channels),
        lr: *config.lr.get_or_insert(preset.learning_rate),
        batch_size: *config.batch_size.get_or_insert(preset.batch_size),
        iterations: *config.iterations.get_or_insert(preset.iterations),
        config,
    };
    if r.batch_size == 0 || r.base_channels == 0 || r.config.checkpoint_every == 0 || r.config.keep_last == 0 {
        return Err(CliError::Usage(
            "batch_size, base_channels, checkpoint_every and keep_last must be positive".into(),
        ));
    }
    if !(r.lr > 0.0 && r.lr.is_finite()) {
        return Err(CliError::Usage(format!("learning rate must be positive, got {}", r.lr)));
    }
    Ok(r)
}

fn load_dataset(r: &Resolved) -> CliResult<Vec<Field<f32>>> {
    let volumes: Vec<Volume3> = match &r.config.data_dir {
        Some(dir) => {
            let paths = list_volumes(dir)?;
            if paths.is_empty() {
                return Err(CliError::Usage(format!("no .v3r volumes in {}", dir.display())));
            }
            paths.iter().map(load_volume).collect::<Result<_, _>>()?
        }
        None => {
            if r.config.synthetic_count == 0 {
                return Err(CliError::Usage("synthetic_count must be positive".into()));
            }
            let dims = dims_from(&r.config.dims)?;
            let mut vols = ellipsoid_dataset(r.config.synthetic_count, dims, r.config.seed)?;
            for v in &mut vols {
                v.data_mut().iter_mut().for_each(|x| *x = 2.0 * *x - 1.0);
            }
            vols
        }
    };
    let dims = volumes[0].dims();
    if let Some(v) = volumes.iter().find(|v| v.dims() != dims) {
        return Err(CliError::Check(format!(
            "training volumes differ in dims: {:?} vs {:?}",
            dims,
            v.dims()
        )));
    }
    volumes
        .iter()
        .map(|v| Ok(dwt3(v)?.into_field()))
        .collect()
}

struct Retention {
    dir: PathBuf,
    keep_last: usize,
    best: Option<f64>,
}

impl Retention {
    fn path(&self, iteration: u64) -> PathBuf {
        self.dir.join(format!("ckpt-{iteration:08}.json"))
    }

    fn save(&mut self, ckpt: &Checkpoint, window_loss: f64) -> CliResult<PathBuf> {
        let path = self.path(ckpt.manifest.step);
        save_checkpoint(&path, ckpt)?;
        if self.best.is_none_or(|b| window_loss < b) {
            self.best = Some(window_loss);
            save_checkpoint(self.dir.join("best.json"), ckpt)?;
        }
        self.prune()?;
        Ok(path)
    }

    fn prune(&self) -> CliResult {
        let mut existing: Vec<PathBuf> = fs::read_dir(&self.dir)
            .map_err(|e| CliError::Other(format!("cannot list {}: {e}", self.dir.display())))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| {
                let name = p.file_name().unwrap_or_default().to_string_lossy();
                name.starts_with("ckpt-") && name.ends_with(".json")
            })
            .collect();
        existing.sort();
        let excess = existing.len().saturating_sub(self.keep_last);
        for old in &existing[..excess] {
            let _ = fs::remove_file(old);
            let _ = fs::remove_file(old.with_extension("bin"));
        }
        Ok(())
    }
}

/// Keeps the header and rows up to `upto`, creating the file if needed.
fn prepare_loss_csv(path: &Path, upto: u64) -> CliResult<BufWriter<File>> {
    let io_err = |e: std::io::Error| CliError::Other(format!("{}: {e}", path.display()));
    let mut kept = vec![LOSS_HEADER.to_string()];
    if upto > 0 && path.exists() {
        let file = File::open(path).map_err(io_err)?;
        for line in BufReader::new(file).lines().skip(1) {
            let line = line.map_err(io_err)?;
            let it: u64 = line.split(',').next().and_then(|s| s.parse().ok()).unwrap_or(u64::MAX);
            if it <= upto {
                kept.push(line);
            }
        }
    }
    fs::write(path, kept.join("\n") + "\n").map_err(io_err)?;
    let file = OpenOptions::new().append(true).open(path).map_err(io_err)?;
    Ok(BufWriter::new(file))
}

#[derive(Serialize)]
struct Summary<'a> {
    command: &'static str,
    seed: u64,
    start_iteration: u64,
    iterations: u64,
    parameter_count: usize,
    final_loss: Option<f64>,
    first_window_mean: Option<f64>,
    last_window_mean: Option<f64>,
    last_checkpoint: Option<PathBuf>,
    best_window_loss: Option<f64>,
    schedule_hash: String,
    config: &'a Resolved,
}

fn mean(xs: &[f64]) -> Option<f64> {
    (!xs.is_empty()).then(|| xs.iter().sum::<f64>() / xs.len() as f64)
}

pub fn run(globals: &Globals, args: Args) -> CliResult {
    let config: Config = resolve(globals, &args)?;
    let r = resolve_config(config)?;
    let out_dir = require_output_dir(&r.config.output_dir)?;
    let ckpt_dir = out_dir.join("checkpoints");
    fs::create_dir_all(&ckpt_dir).map_err(|e| CliError::Other(format!("{}: {e}", ckpt_dir.display())))?;
    write_json(&out_dir.join("train.config.json"), &r)?;

    let sched = NoiseSchedule::preset(&r.schedule).map_err(|e| CliError::Usage(e.to_string()))?;
    let data = load_dataset(&r)?;
    let coeff_dims = data[0].dims();
    let net_config = NetConfig {
        base_channels: r.base_channels,
        wavelet: r.config.wavelet,
    };

    let mut retention = Retention {
        dir: ckpt_dir.clone(),
        keep_last: r.config.keep_last,
        best: None,
    };
    let (mut net, mut opt, start) = match &r.config.resume {
        Some(path) => {
            let ckpt = load_checkpoint(path)?;
            let m = &ckpt.manifest;
            if m.config != net_config || m.coeff_dims != coeff_dims || m.schedule_hash != sched.hash() || m.seed != r.config.seed {
                return Err(CliError::Check(format!(
                    "checkpoint {} was trained with a different network, data shape, schedule or seed",
                    path.display()
                )));
            }
            if m.step > r.iterations {
                return Err(CliError::Usage(format!(
                    "checkpoint is at iteration {} but only {} iterations were requested",
                    m.step, r.iterations
                )));
            }
            retention.best = m.extra.get("best_window_loss").and_then(|v| v.as_f64());
            let mut opt = ckpt.optimizer;
            opt.lr = r.lr;
            (ckpt.net, opt, m.step)
        }
        None => {
            let net = TinyConvDenoiser::<f32>::init(net_config, &mut RngState::with_stream(r.config.seed, INIT_STREAM))?;
            let opt = Adam::new(r.lr, net.parameter_count());
            (net, opt, 0)
        }
    };
    println!(
        "training {} parameters on {} volume(s), coefficient dims {:?}, schedule {}, seed {}",
        net.parameter_count(),
        data.len(),
        coeff_dims,
        sched.name(),
        r.config.seed
    );

    let csv_path = out_dir.join("loss.csv");
    let mut csv = prepare_loss_csv(&csv_path, start)?;
    let csv_err = |e: std::io::Error| CliError::Other(format!("{}: {e}", csv_path.display()));
    let mut losses = Vec::new();
    let mut window = Vec::new();
    let mut last_checkpoint = None;
    let make_ckpt = |net: &TinyConvDenoiser<f32>, opt: &Adam, step: u64, loss: Option<f64>, best: Option<f64>| {
        Checkpoint::new(
            net.clone(),
            opt.clone(),
            CheckpointMeta {
                step,
                seed: r.config.seed,
                schedule: sched.name().to_string(),
                schedule_hash: sched.hash(),
                coeff_dims,
                loss,
                extra: serde_json::json!({ "best_window_loss": best }),
            },
        )
    };

    for it in start + 1..=r.iterations {
        let mut rng = RngState::with_stream(r.config.seed, it);
        let batch: Vec<Field<f32>> = (0..r.batch_size)
            .map(|_| data[rng.uniform_inclusive(0, data.len() - 1)].clone())
            .collect();
        let report = match train_step(&batch, &mut net, &sched, &mut rng, &mut opt) {
            Ok(report) => report,
            Err(e @ (Error::NonFiniteLoss { .. } | Error::NonFiniteGradient { .. })) => {
                csv.flush().map_err(csv_err)?;
                let path = ckpt_dir.join(format!("diverged-{it:08}.json"));
                save_checkpoint(&path, &make_ckpt(&net, &opt, it - 1, None, retention.best))?;
                return Err(CliError::Check(format!(
                    "training diverged at iteration {it}: {e}; state before the step saved to {}",
                    path.display()
                )));
            }
            Err(e) => return Err(e.into()),
        };
        writeln!(csv, "{it},{},{}", report.t_mean, report.loss).map_err(csv_err)?;
        losses.push(report.loss);
        window.push(report.loss);
        if it % r.config.checkpoint_every == 0 || it == r.iterations {
            csv.flush().map_err(csv_err)?;
            let window_loss = mean(&window).unwrap_or(f64::INFINITY);
            let best = Some(retention.best.map_or(window_loss, |b| b.min(window_loss)));
            let ckpt = make_ckpt(&net, &opt, it, Some(report.loss), best);
            let path = retention.save(&ckpt, window_loss)?;
            println!("iteration {it}: loss {:.6} (interval mean {window_loss:.6})", report.loss);
            last_checkpoint = Some(path);
            window.clear();
        }
    }
    csv.flush().map_err(csv_err)?;

    let w = 50.min(losses.len());
    let summary = Summary {
        command: "train",
        seed: r.config.seed,
        start_iteration: start,
        iterations: r.iterations,
        parameter_count: net.parameter_count(),
        final_loss: losses.last().copied(),
        first_window_mean: mean(&losses[..w]),
        last_window_mean: mean(&losses[losses.len() - w..]),
        last_checkpoint,
        best_window_loss: retention.best,
        schedule_hash: sched.hash(),
        config: &r,
    };
    if let (Some(a), Some(b)) = (summary.first_window_mean, summary.last_window_mean) {
        println!("mean loss over first {w} steps {a:.6}, last {w} steps {b:.6}");
    }
    emit(&summary, Some(&out_dir), "train.json")
}
