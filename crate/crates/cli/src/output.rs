use std::fs;
use std::path::Path;

use serde::Serialize;

use crate::error::{CliError, CliResult};

/// Writes `value` as pretty JSON to `path`.
pub fn write_json(path: &Path, value: &impl Serialize) -> CliResult {
    let text = serde_json::to_string_pretty(value)
        .map_err(|e| CliError::Other(format!("cannot encode JSON: {e}")))?;
    fs::write(path, text).map_err(|e| CliError::Other(format!("cannot write {}: {e}", path.display())))
}

/// Prints the machine-readable record as the final stdout line and, with an
/// output directory, saves it as `<name>`.
pub fn emit(record: &impl Serialize, dir: Option<&Path>, name: &str) -> CliResult {
    if let Some(dir) = dir {
        write_json(&dir.join(name), record)?;
    }
    let line = serde_json::to_string(record)
        .map_err(|e| CliError::Other(format!("cannot encode JSON: {e}")))?;
    println!("{line}");
    Ok(())
}
