//! The `v3r` format: a JSON header `<name>.v3r.json` next to a raw payload
//! `<name>.v3r.raw` of little-endian f32 values, D-major and W-fastest.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::Volume3;
use crate::error::{Error, Result};

pub const V3R_MAGIC: &str = "v3r1";
pub const V3R_DTYPE: &str = "f32le";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct V3rHeader {
    pub magic: String,
    pub dims: [usize; 3],
    pub spacing: [f64; 3],
    pub dtype: String,
    /// Set on files that hold stacked wavelet subbands.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub subbands: bool,
}

/// Resolves `<stem>.v3r.json` / `<stem>.v3r.raw` from either file name or the
/// bare stem.
pub(crate) fn v3r_paths(path: &Path) -> (PathBuf, PathBuf) {
    let s = path.to_string_lossy();
    let stem = s
        .strip_suffix(".v3r.json")
        .or_else(|| s.strip_suffix(".v3r.raw"))
        .or_else(|| s.strip_suffix(".v3r"))
        .unwrap_or(&s)
        .to_string();
    (
        PathBuf::from(format!("{stem}.v3r.json")),
        PathBuf::from(format!("{stem}.v3r.raw")),
    )
}

pub(crate) fn read_v3r(path: &Path) -> Result<(V3rHeader, Vec<f32>)> {
    let (header_path, raw_path) = v3r_paths(path);
    let text = fs::read_to_string(&header_path).map_err(|e| Error::io(&header_path, e))?;
    let header: V3rHeader = serde_json::from_str(&text).map_err(|e| Error::Header {
        path: header_path.clone(),
        message: e.to_string(),
    })?;
    if header.magic != V3R_MAGIC {
        return Err(Error::Header {
            path: header_path,
            message: format!("bad magic {:?}", header.magic),
        });
    }
    if header.dtype != V3R_DTYPE {
        return Err(Error::UnsupportedDtype(header.dtype));
    }
    let bytes = fs::read(&raw_path).map_err(|e| Error::io(&raw_path, e))?;
    let expected: usize = header.dims.iter().product();
    if bytes.len() % 4 != 0 || bytes.len() / 4 != expected {
        return Err(Error::PayloadLength {
            expected,
            found: bytes.len() / 4,
        });
    }
    let data: Vec<f32> = bytes
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
        .collect();
    if let Some(i) = data.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite(i));
    }
    Ok((header, data))
}

pub(crate) fn write_v3r(path: &Path, header: &V3rHeader, data: &[f32]) -> Result<()> {
    if let Some(i) = data.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite(i));
    }
    let (header_path, raw_path) = v3r_paths(path);
    if let Some(parent) = header_path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let mut bytes = Vec::with_capacity(data.len() * 4);
    for v in data {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    fs::write(&raw_path, bytes).map_err(|e| Error::io(&raw_path, e))?;
    let text = serde_json::to_string_pretty(header)?;
    fs::write(&header_path, text).map_err(|e| Error::io(&header_path, e))?;
    Ok(())
}

pub fn load_volume(path: impl AsRef<Path>) -> Result<Volume3> {
    let (header, data) = read_v3r(path.as_ref())?;
    Volume3::new(header.dims, header.spacing, data)
}

/// Writes `vol` as `<stem>.v3r.json` + `<stem>.v3r.raw`. Non-finite data is
/// rejected before anything touches the disk.
pub fn save_volume(vol: &Volume3, path: impl AsRef<Path>) -> Result<()> {
    if vol.is_empty() {
        return Err(Error::EmptyVolume);
    }
    let header = V3rHeader {
        magic: V3R_MAGIC.into(),
        dims: vol.dims(),
        spacing: vol.spacing(),
        dtype: V3R_DTYPE.into(),
        subbands: false,
    };
    write_v3r(path.as_ref(), &header, vol.data())
}
