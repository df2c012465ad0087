use serde::Serialize;
use wavediff_core::presets::HyperPreset;
use wavediff_core::{NoiseSchedule, PreprocessRecipe};

use crate::error::CliResult;
use crate::output::emit;

#[derive(Serialize)]
struct ScheduleInfo {
    name: String,
    timesteps: usize,
    beta_1: f64,
    beta_t: f64,
    alpha_bar_1: f64,
    alpha_bar_t: f64,
    hash: String,
}

#[derive(Serialize)]
struct Listing {
    command: &'static str,
    presets: Vec<HyperPreset>,
    schedules: Vec<ScheduleInfo>,
    recipes: Vec<(&'static str, PreprocessRecipe)>,
}

pub fn run() -> CliResult {
    let presets = HyperPreset::all();
    println!(
        "{:<10} {:>5} {:>4} {:>8} {:>6} {:>10} {:>6}  schedule",
        "preset", "res", "C", "lr", "batch", "iters", "T"
    );
    for p in &presets {
        println!(
            "{:<10} {:>5} {:>4} {:>8.0e} {:>6} {:>10} {:>6}  {}",
            p.name, p.resolution, p.base_channels, p.learning_rate, p.batch_size, p.iterations, p.timesteps, p.schedule
        );
    }
    let mut schedules = Vec::new();
    for name in ["linear-100", "linear-1000"] {
        let s = NoiseSchedule::preset(name)?;
        schedules.push(ScheduleInfo {
            name: name.into(),
            timesteps: s.len(),
            beta_1: s.beta(1),
            beta_t: s.beta(s.len()),
            alpha_bar_1: s.alpha_bar(1),
            alpha_bar_t: s.alpha_bar(s.len()),
            hash: s.hash(),
        });
    }
    let recipes = PreprocessRecipe::PRESET_NAMES
        .iter()
        .filter_map(|&n| PreprocessRecipe::preset(n).map(|r| (n, r)))
        .collect();
    emit(
        &Listing { command: "presets", presets, schedules, recipes },
        None,
        "presets.json",
    )
}
