//! Named hyperparameter sets.
//!
//! `paper` and `paper-256` record the published settings for 128³ and 256³
//! volumes. They describe a multi-scale U-Net that this crate does not build;
//! only `desk` is meant to be trained here.

use serde::Serialize;

use crate::denoiser::NetConfig;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HyperPreset {
    pub name: &'static str,
    pub resolution: usize,
    pub base_channels: usize,
    pub res_blocks_per_scale: usize,
    pub channel_mult: Vec<usize>,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub iterations: u64,
    pub timesteps: usize,
    pub schedule: &'static str,
    pub beta_1: f64,
    pub beta_t: f64,
    /// False for sets that describe hardware-scale runs.
    pub desk_trainable: bool,
}

impl HyperPreset {
    pub const NAMES: [&'static str; 3] = ["desk", "paper", "paper-256"];

    pub fn desk() -> Self {
        Self {
            name: "desk",
            resolution: 16,
            base_channels: 8,
            res_blocks_per_scale: 2,
            channel_mult: vec![1],
            learning_rate: 1e-3,
            batch_size: 4,
            iterations: 200,
            timesteps: 100,
            schedule: "linear-100",
            beta_1: 1e-4,
            beta_t: 0.02,
            desk_trainable: true,
        }
    }

    pub fn paper() -> Self {
        Self {
            name: "paper",
            resolution: 128,
            base_channels: 64,
            res_blocks_per_scale: 2,
            channel_mult: vec![1, 2, 2, 4, 4],
            learning_rate: 1e-5,
            batch_size: 10,
            iterations: 1_200_000,
            timesteps: 1000,
            schedule: "linear-1000",
            beta_1: 1e-4,
            beta_t: 0.02,
            desk_trainable: false,
        }
    }

    pub fn paper_256() -> Self {
        Self {
            name: "paper-256",
            resolution: 256,
            channel_mult: vec![1, 2, 2, 4, 4, 4],
            batch_size: 1,
            iterations: 2_000_000,
            ..Self::paper()
        }
    }

    pub fn by_name(name: &str) -> Result<Self> {
        match name {
            "desk" => Ok(Self::desk()),
            "paper" | "paper-128" => Ok(Self::paper()),
            "paper-256" => Ok(Self::paper_256()),
            other => Err(Error::InvalidArgument(format!(
                "unknown preset {other:?}; expected one of {:?}",
                Self::NAMES
            ))),
        }
    }

    pub fn all() -> Vec<Self> {
        vec![Self::desk(), Self::paper(), Self::paper_256()]
    }

    pub fn net_config(&self, wavelet: bool) -> NetConfig {
        NetConfig {
            base_channels: self.base_channels,
            wavelet,
        }
    }
}
