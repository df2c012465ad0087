//! Checkpoints: a JSON manifest next to a raw little-endian f32 blob.
//!
//! Blob layout, in order: network parameters (in [`ParamLayout`] order), Adam
//! first moments, Adam second moments. Each section holds `param_count`
//! values.
//!
//! [`ParamLayout`]: super::net::ParamLayout

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::adam::Adam;
use super::net::{NetConfig, TinyConvDenoiser};
use crate::error::{Error, Result};

pub const CHECKPOINT_FORMAT: &str = "wavediff-ckpt1";
const BLOB_SECTIONS: [&str; 3] = ["params", "adam_m", "adam_v"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayoutEntry {
    pub name: String,
    pub offset: usize,
    pub len: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerManifest {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointManifest {
    pub format: String,
    pub config: NetConfig,
    /// Completed training iterations.
    pub step: u64,
    pub seed: u64,
    pub schedule: String,
    pub schedule_hash: String,
    /// Coefficient-tensor spatial dims the network was trained on.
    pub coeff_dims: [usize; 3],
    pub loss: Option<f64>,
    pub param_count: usize,
    pub layout: Vec<LayoutEntry>,
    pub optimizer: OptimizerManifest,
    pub blob: String,
    pub blob_order: Vec<String>,
    /// Caller-defined metadata, stored verbatim.
    #[serde(default)]
    pub extra: serde_json::Value,
}

#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub manifest: CheckpointManifest,
    pub net: TinyConvDenoiser<f32>,
    pub optimizer: Adam,
}

#[derive(Debug, Clone)]
pub struct CheckpointMeta {
    pub step: u64,
    pub seed: u64,
    pub schedule: String,
    pub schedule_hash: String,
    pub coeff_dims: [usize; 3],
    pub loss: Option<f64>,
    pub extra: serde_json::Value,
}

impl Checkpoint {
    pub fn new(net: TinyConvDenoiser<f32>, optimizer: Adam, meta: CheckpointMeta) -> Self {
        let layout = net
            .layout()
            .entries()
            .iter()
            .map(|(name, r)| LayoutEntry {
                name: name.clone(),
                offset: r.start,
                len: r.len(),
            })
            .collect();
        let manifest = CheckpointManifest {
            format: CHECKPOINT_FORMAT.to_string(),
            config: net.config(),
            step: meta.step,
            seed: meta.seed,
            schedule: meta.schedule,
            schedule_hash: meta.schedule_hash,
            coeff_dims: meta.coeff_dims,
            loss: meta.loss,
            param_count: net.parameter_count(),
            layout,
            optimizer: OptimizerManifest {
                lr: optimizer.lr,
                beta1: optimizer.beta1,
                beta2: optimizer.beta2,
                eps: optimizer.eps,
                step: optimizer.step_count(),
            },
            blob: String::new(),
            blob_order: BLOB_SECTIONS.iter().map(|s| s.to_string()).collect(),
            extra: meta.extra,
        };
        Self {
            manifest,
            net,
            optimizer,
        }
    }
}

fn blob_path(manifest_path: &Path) -> PathBuf {
    let name = manifest_path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    let stem = name.strip_suffix(".json").unwrap_or(&name);
    manifest_path.with_file_name(format!("{stem}.bin"))
}

/// Writes `<stem>.json` and `<stem>.bin`; `path` names the manifest.
pub fn save_checkpoint(path: impl AsRef<Path>, ckpt: &Checkpoint) -> Result<()> {
    let path = path.as_ref();
    let blob = blob_path(path);
    let n = ckpt.net.parameter_count();
    if ckpt.optimizer.first_moment().len() != n || ckpt.optimizer.second_moment().len() != n {
        return Err(Error::Shape(format!(
            "optimizer moments do not match {n} parameters"
        )));
    }
    let mut bytes = Vec::with_capacity(3 * n * 4);
    for section in [
        ckpt.net.params(),
        ckpt.optimizer.first_moment(),
        ckpt.optimizer.second_moment(),
    ] {
        for v in section {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
    }
    fs::write(&blob, bytes).map_err(|e| Error::io(&blob, e))?;

    let mut manifest = ckpt.manifest.clone();
    manifest.blob = blob
        .file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let json = serde_json::to_string_pretty(&manifest)?;
    fs::write(path, json).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let manifest: CheckpointManifest = serde_json::from_str(&text)?;
    let header = |message: String| Error::Header {
        path: path.to_path_buf(),
        message,
    };
    if manifest.format != CHECKPOINT_FORMAT {
        return Err(header(format!("unknown checkpoint format {:?}", manifest.format)));
    }
    if manifest.blob_order != BLOB_SECTIONS {
        return Err(header(format!("unexpected blob order {:?}", manifest.blob_order)));
    }
    let n = manifest.config.layout().total();
    if manifest.param_count != n {
        return Err(header(format!(
            "param_count {} does not match config ({n})",
            manifest.param_count
        )));
    }
    let blob = path.with_file_name(&manifest.blob);
    let bytes = fs::read(&blob).map_err(|e| Error::io(&blob, e))?;
    if bytes.len() != 3 * n * 4 {
        return Err(Error::PayloadLength {
            expected: 3 * n * 4,
            found: bytes.len(),
        });
    }
    let mut floats = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]));
    let mut take = || floats.by_ref().take(n).collect::<Vec<f32>>();
    let params = take();
    let m = take();
    let v = take();
    if let Some(i) = params.iter().position(|p| !p.is_finite()) {
        return Err(Error::NonFinite(i));
    }
    let net = TinyConvDenoiser::from_params(manifest.config, params)?;
    let o = &manifest.optimizer;
    let mut optimizer = Adam::from_state(o.lr, o.step, m, v)?;
    optimizer.beta1 = o.beta1;
    optimizer.beta2 = o.beta2;
    optimizer.eps = o.eps;
    Ok(Checkpoint {
        manifest,
        net,
        optimizer,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngState;

    fn meta() -> CheckpointMeta {
        CheckpointMeta {
            step: 12,
            seed: 7,
            schedule: "linear-100".into(),
            schedule_hash: "abc".into(),
            coeff_dims: [8, 8, 8],
            loss: Some(0.25),
            extra: serde_json::json!({"note": 1}),
        }
    }

    #[test]
    fn roundtrip_is_bitwise() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = NetConfig { base_channels: 3, wavelet: true };
        let mut rng = RngState::new(1);
        let net = TinyConvDenoiser::<f32>::init(cfg, &mut rng).unwrap();
        let mut opt = Adam::new(1e-3, net.parameter_count());
        let mut p = net.params().to_vec();
        let g: Vec<f32> = (0..p.len()).map(|_| rng.normal() as f32).collect();
        opt.update(&mut p, &g).unwrap();
        let net = TinyConvDenoiser::from_params(cfg, p).unwrap();
        let ckpt = Checkpoint::new(net.clone(), opt.clone(), meta());

        let path = dir.path().join("ckpt-000012.json");
        save_checkpoint(&path, &ckpt).unwrap();
        assert!(dir.path().join("ckpt-000012.bin").exists());
        let back = load_checkpoint(&path).unwrap();
        let bits = |v: &[f32]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(back.net.params()), bits(net.params()));
        assert_eq!(bits(back.optimizer.first_moment()), bits(opt.first_moment()));
        assert_eq!(bits(back.optimizer.second_moment()), bits(opt.second_moment()));
        assert_eq!(back.optimizer, opt);
        assert_eq!(back.manifest.step, 12);
        assert_eq!(back.manifest.extra["note"], 1);
        assert_eq!(back.manifest.layout.len(), net.layout().entries().len());
    }

    #[test]
    fn truncated_blob_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let net = TinyConvDenoiser::<f32>::zeros(NetConfig::desk()).unwrap();
        let opt = Adam::new(1e-3, net.parameter_count());
        let path = dir.path().join("c.json");
        save_checkpoint(&path, &Checkpoint::new(net, opt, meta())).unwrap();
        let blob = dir.path().join("c.bin");
        let bytes = fs::read(&blob).unwrap();
        fs::write(&blob, &bytes[..bytes.len() - 4]).unwrap();
        assert!(matches!(
            load_checkpoint(&path),
            Err(Error::PayloadLength { .. })
        ));
    }
}
