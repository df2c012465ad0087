//! Feature vectors for the Fréchet distance: CSV I/O and a toy extractor.

use std::path::Path;

use crate::error::{Error, Result};
use crate::volume::Volume3;

pub const TOY_FEATURE_NAMES: [&str; 5] = ["mean", "variance", "grad_d", "grad_h", "grad_w"];

/// Global mean, variance, and mean squared forward difference along each
/// axis. A stand-in for a learned feature extractor.
pub fn toy_features(vol: &Volume3) -> Vec<f64> {
    let n = vol.len() as f64;
    let mean = vol.mean();
    let var = vol
        .data()
        .iter()
        .map(|&v| (v as f64 - mean).powi(2))
        .sum::<f64>()
        / n;
    let [d, h, w] = vol.dims();
    let mut grad = [0.0f64; 3];
    let mut count = [0usize; 3];
    for z in 0..d {
        for y in 0..h {
            for x in 0..w {
                let v = vol.data()[vol.index(z, y, x)] as f64;
                let mut diff = |axis: usize, nz: usize, ny: usize, nx: usize| {
                    let u = vol.data()[vol.index(nz, ny, nx)] as f64;
                    grad[axis] += (u - v).powi(2);
                    count[axis] += 1;
                };
                if z + 1 < d {
                    diff(0, z + 1, y, x);
                }
                if y + 1 < h {
                    diff(1, z, y + 1, x);
                }
                if x + 1 < w {
                    diff(2, z, y, x + 1);
                }
            }
        }
    }
    let g = |a: usize| if count[a] == 0 { 0.0 } else { grad[a] / count[a] as f64 };
    vec![mean, var, g(0), g(1), g(2)]
}

/// Reads one vector per row. The header row fixes the dimension.
pub fn read_features_csv(path: impl AsRef<Path>) -> Result<Vec<Vec<f64>>> {
    let path = path.as_ref();
    let mut reader = csv::Reader::from_path(path).map_err(|e| match e.into_kind() {
        csv::ErrorKind::Io(source) => Error::io(path, source),
        other => Error::Header {
            path: path.to_path_buf(),
            message: format!("{other:?}"),
        },
    })?;
    let dim = reader.headers()?.len();
    let mut rows = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record?;
        if record.len() != dim {
            return Err(Error::Shape(format!(
                "{}: row {} has {} values, header has {dim}",
                path.display(),
                i + 1,
                record.len()
            )));
        }
        let row = record
            .iter()
            .map(|s| {
                s.trim().parse::<f64>().map_err(|_| Error::Header {
                    path: path.to_path_buf(),
                    message: format!("row {}: {s:?} is not a number", i + 1),
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
    }
    Ok(rows)
}

pub fn write_features_csv(path: impl AsRef<Path>, names: &[&str], rows: &[Vec<f64>]) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(names)?;
    for row in rows {
        if row.len() != names.len() {
            return Err(Error::Shape(format!(
                "feature row has {} values, header has {}",
                row.len(),
                names.len()
            )));
        }
        w.write_record(row.iter().map(|v| format!("{v:e}")))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
