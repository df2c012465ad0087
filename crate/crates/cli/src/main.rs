//! `wavediff` command-line driver.
//!
//! Exit codes: 0 success, 1 failed check or runtime error, 2 usage error.

mod cmd;
mod config;
mod error;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::error::CliError;

#[derive(Debug, Parser)]
#[command(name = "wavediff", version, about = "Wavelet-domain diffusion for 3D volumes")]
struct Cli {
    /// Seed for every random draw. Defaults to 0 and is always echoed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// JSON file with command settings; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    output_dir: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Apply a preprocessing recipe to every volume in a directory.
    Preprocess(cmd::preprocess::Args),
    /// Check DWT/IDWT perfect reconstruction on one volume.
    RoundtripCheck(cmd::roundtrip::Args),
    /// Train the convolutional denoiser on coefficient tensors.
    Train(cmd::train::Args),
    /// Draw volumes by ancestral sampling.
    Sample(cmd::sample::Args),
    /// Diversity (MS-SSIM) or Fréchet distance over sample sets.
    Eval(cmd::eval::Args),
    /// Time the transform kernels.
    Bench(cmd::bench::Args),
    /// Print the named hyperparameter sets, schedules and recipes.
    Presets,
    /// Write seeded synthetic ellipsoid volumes.
    Synth(cmd::synth::Args),
}

fn run(cli: Cli) -> Result<(), CliError> {
    let globals = config::Globals {
        seed: cli.seed,
        config: cli.config,
        output_dir: cli.output_dir,
    };
    match cli.command {
        Command::Preprocess(a) => cmd::preprocess::run(&globals, a),
        Command::RoundtripCheck(a) => cmd::roundtrip::run(&globals, a),
        Command::Train(a) => cmd::train::run(&globals, a),
        Command::Sample(a) => cmd::sample::run(&globals, a),
        Command::Eval(a) => cmd::eval::run(&globals, a),
        Command::Bench(a) => cmd::bench::run(&globals, a),
        Command::Presets => cmd::presets::run(),
        Command::Synth(a) => cmd::synth::run(&globals, a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.threads {
        Some(0) => Err(CliError::Usage("--threads must be at least 1".into())),
        Some(n) => match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
            Ok(pool) => pool.install(|| run(cli)),
            Err(e) => Err(CliError::Other(format!("cannot start thread pool: {e}"))),
        },
        None => run(cli),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
