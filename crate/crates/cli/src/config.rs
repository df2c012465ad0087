//! Settings resolution: built-in defaults, then the `--config` JSON file,
//! then explicit flags.

use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{Map, Value};

use crate::error::{CliError, CliResult};

#[derive(Debug, Default)]
pub struct Globals {
    pub seed: Option<u64>,
    pub config: Option<PathBuf>,
    pub output_dir: Option<PathBuf>,
}

fn overlay(base: &mut Map<String, Value>, top: Map<String, Value>) {
    for (k, v) in top {
        if !v.is_null() {
            base.insert(k, v);
        }
    }
}

fn as_object(v: Value, what: &str) -> CliResult<Map<String, Value>> {
    match v {
        Value::Object(m) => Ok(m),
        _ => Err(CliError::Usage(format!("{what} must be a JSON object"))),
    }
}

/// Resolves `C` from its defaults, the config file and `flags` (whose unset
/// options serialize as absent or null). The global seed and output dir
/// apply when `C` has those keys.
pub fn resolve<C, F>(globals: &Globals, flags: &F) -> CliResult<C>
where
    C: Default + Serialize + DeserializeOwned,
    F: Serialize,
{
    let mut merged = as_object(serde_json::to_value(C::default())?, "defaults")?;
    let has = |m: &Map<String, Value>, k: &str| m.contains_key(k);
    let accepts_seed = has(&merged, "seed");
    let accepts_out = has(&merged, "output_dir");
    if let Some(path) = &globals.config {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        let file: Value = serde_json::from_str(&text)
            .map_err(|e| CliError::Usage(format!("config {} is not valid JSON: {e}", path.display())))?;
        overlay(&mut merged, as_object(file, "config file")?);
    }
    overlay(&mut merged, as_object(serde_json::to_value(flags)?, "flags")?);
    if let (true, Some(seed)) = (accepts_seed, globals.seed) {
        merged.insert("seed".into(), seed.into());
    }
    if let (true, Some(dir)) = (accepts_out, &globals.output_dir) {
        merged.insert("output_dir".into(), serde_json::to_value(dir)?);
    }
    Ok(serde_json::from_value(Value::Object(merged))?)
}

pub fn require_output_dir(dir: &Option<PathBuf>) -> CliResult<PathBuf> {
    let dir = dir
        .clone()
        .ok_or_else(|| CliError::Usage("--output-dir is required".into()))?;
    fs::create_dir_all(&dir)
        .map_err(|e| CliError::Other(format!("cannot create {}: {e}", dir.display())))?;
    Ok(dir)
}

/// `[n]` means a cube; `[d, h, w]` is taken as is.
pub fn dims_from(values: &[usize]) -> CliResult<[usize; 3]> {
    match values {
        [n] => Ok([*n; 3]),
        [d, h, w] => Ok([*d, *h, *w]),
        _ => Err(CliError::Usage(format!(
            "dims take one value or three comma-separated values, got {values:?}"
        ))),
    }
}

/// `*.v3r.json` headers in `dir`, sorted by name.
pub fn list_volumes(dir: &Path) -> CliResult<Vec<PathBuf>> {
    let entries = fs::read_dir(dir)
        .map_err(|e| CliError::Other(format!("cannot read {}: {e}", dir.display())))?;
    let mut out = Vec::new();
    for entry in entries {
        let path = entry
            .map_err(|e| CliError::Other(format!("cannot read {}: {e}", dir.display())))?
            .path();
        if path.to_string_lossy().ends_with(".v3r.json") {
            out.push(path);
        }
    }
    out.sort();
    Ok(out)
}

/// File stem without the `.v3r.json` suffix.
pub fn volume_stem(path: &Path) -> String {
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    name.strip_suffix(".v3r.json").unwrap_or(&name).to_string()
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde::Deserialize;

    #[derive(Debug, Default, Serialize, Deserialize, PartialEq)]
    #[serde(default, deny_unknown_fields)]
    struct Demo {
        seed: u64,
        count: usize,
        name: String,
        output_dir: Option<PathBuf>,
    }

    #[derive(Serialize)]
    struct Flags {
        #[serde(skip_serializing_if = "Option::is_none")]
        count: Option<usize>,
    }

    #[test]
    fn flags_override_file_override_defaults() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.json");
        fs::write(&path, r#"{"count": 3, "name": "file"}"#).unwrap();
        let g = Globals {
            seed: Some(9),
            config: Some(path),
            output_dir: None,
        };
        let c: Demo = resolve(&g, &Flags { count: Some(5) }).unwrap();
        assert_eq!(c, Demo { seed: 9, count: 5, name: "file".into(), output_dir: None });
        let c: Demo = resolve(&g, &Flags { count: None }).unwrap();
        assert_eq!(c.count, 3);
    }

    #[test]
    fn unknown_keys_are_usage_errors() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.json");
        fs::write(&path, r#"{"bogus": 1}"#).unwrap();
        let g = Globals { config: Some(path), ..Globals::default() };
        let r: CliResult<Demo> = resolve(&g, &Flags { count: None });
        assert!(matches!(r, Err(CliError::Usage(_))));
    }

    #[test]
    fn dims_parsing() {
        assert_eq!(dims_from(&[8]).unwrap(), [8, 8, 8]);
        assert_eq!(dims_from(&[2, 4, 6]).unwrap(), [2, 4, 6]);
        assert!(dims_from(&[2, 4]).is_err());
    }
}
