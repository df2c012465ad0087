use std::collections::BTreeMap;
use std::path::PathBuf;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use wavediff_core::volume::{apply_recipe, load_volume, save_volume};
use wavediff_core::PreprocessRecipe;

use crate::config::{dims_from, list_volumes, require_output_dir, resolve, volume_stem, Globals};
use crate::error::{CliError, CliResult};
use crate::output::emit;

#[derive(Debug, clap::Args, Serialize)]
pub struct Args {
    /// Directory of `.v3r` volumes.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    input_dir: Option<PathBuf>,
    /// One of brats, brats-128, lidc, lidc-128.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    recipe: Option<String>,
    /// Replace the recipe's pad/crop target (one value or D,H,W).
    #[arg(long, value_delimiter = ',')]
    #[serde(skip_serializing_if = "Option::is_none")]
    target: Option<Vec<usize>>,
    /// Replace the recipe's number of 2× average-pool halvings.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    halvings: Option<u32>,
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct Config {
    input_dir: Option<PathBuf>,
    recipe: String,
    target: Option<Vec<usize>>,
    halvings: Option<u32>,
    output_dir: Option<PathBuf>,
}

#[derive(Serialize)]
struct Summary<'a> {
    command: &'static str,
    count: usize,
    dims_histogram: BTreeMap<String, usize>,
    value_range: Option<[f32; 2]>,
    recipe: &'a PreprocessRecipe,
    config: &'a Config,
}

pub fn run(globals: &Globals, args: Args) -> CliResult {
    let mut config: Config = resolve(globals, &args)?;
    if config.recipe.is_empty() {
        config.recipe = "brats".into();
    }
    let mut recipe = PreprocessRecipe::preset(&config.recipe).ok_or_else(|| {
        CliError::Usage(format!(
            "unknown recipe {:?}; expected one of {:?}",
            config.recipe,
            PreprocessRecipe::PRESET_NAMES
        ))
    })?;
    if let Some(t) = &config.target {
        recipe = recipe.with_target(dims_from(t)?);
    }
    if let Some(h) = config.halvings {
        recipe = recipe.with_halvings(h);
    }
    recipe.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    let input = config
        .input_dir
        .clone()
        .ok_or_else(|| CliError::Usage("--input-dir is required".into()))?;
    let out_dir = require_output_dir(&config.output_dir)?;
    let inputs = list_volumes(&input)?;
    if inputs.is_empty() {
        eprintln!("warning: no .v3r volumes in {}", input.display());
    }

    let results = inputs
        .par_iter()
        .map(|path| -> CliResult<([usize; 3], (f32, f32))> {
            let vol = load_volume(path)?;
            let out = apply_recipe(&vol, &recipe)
                .map_err(|e| CliError::Check(format!("{}: {e}", path.display())))?;
            save_volume(&out, out_dir.join(format!("{}.v3r", volume_stem(path))))?;
            Ok((out.dims(), out.min_max()))
        })
        .collect::<CliResult<Vec<_>>>()?;

    let mut histogram = BTreeMap::new();
    let mut range: Option<[f32; 2]> = None;
    for (dims, (lo, hi)) in &results {
        *histogram
            .entry(format!("{}x{}x{}", dims[0], dims[1], dims[2]))
            .or_insert(0) += 1;
        range = Some(match range {
            None => [*lo, *hi],
            Some([a, b]) => [a.min(*lo), b.max(*hi)],
        });
    }
    println!(
        "preprocessed {} volume(s) with recipe {} into {}",
        results.len(),
        config.recipe,
        out_dir.display()
    );
    if let Some([lo, hi]) = range {
        println!("value range [{lo}, {hi}]");
    }
    let summary = Summary {
        command: "preprocess",
        count: results.len(),
        dims_histogram: histogram,
        value_range: range,
        recipe: &recipe,
        config: &config,
    };
    emit(&summary, Some(&out_dir), "preprocess.json")
}
