//! Model checkpoints: `<stem>.json` describes the network, the training
//! config and history; `<stem>.bin` holds the parameters as `f32`.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::neural::io::{param_entries, params_from_blob, params_to_blob, TensorEntry};
use crate::neural::{Model, NetworkSpec};

use super::fit::EpochMetrics;
use super::{TrainConfig, TrainError};

const FORMAT: &str = "evlink-checkpoint";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model: Model,
    pub config: TrainConfig,
    pub epoch: usize,
    pub history: Vec<EpochMetrics>,
    pub instance_ids: Vec<String>,
}

#[derive(Serialize, Deserialize)]
struct Header {
    format: String,
    version: u32,
    network: NetworkSpec,
    tensors: Vec<TensorEntry>,
    config: TrainConfig,
    epoch: usize,
    history: Vec<EpochMetrics>,
    instances: Vec<String>,
}

/// `(json, bin)` paths for a checkpoint stem. A trailing `.json` or `.bin`
/// on `path` is ignored.
pub fn checkpoint_paths(path: &Path) -> (PathBuf, PathBuf) {
    let s = path.to_string_lossy();
    let stem = s
        .strip_suffix(".json")
        .or_else(|| s.strip_suffix(".bin"))
        .unwrap_or(&s);
    (
        PathBuf::from(format!("{stem}.json")),
        PathBuf::from(format!("{stem}.bin")),
    )
}

impl Checkpoint {
    /// Parameters are rounded to `f32` so that saving is lossless.
    pub fn new(
        mut model: Model,
        config: TrainConfig,
        epoch: usize,
        history: Vec<EpochMetrics>,
        instance_ids: Vec<String>,
    ) -> Self {
        model.params_mut().round_to_f32();
        Self {
            model,
            config,
            epoch,
            history,
            instance_ids,
        }
    }

    pub fn to_parts(&self) -> (String, Vec<u8>) {
        let header = Header {
            format: FORMAT.into(),
            version: VERSION,
            network: self.model.spec().clone(),
            tensors: param_entries(self.model.params()),
            config: self.config.clone(),
            epoch: self.epoch,
            history: self.history.clone(),
            instances: self.instance_ids.clone(),
        };
        let json = serde_json::to_string_pretty(&header).expect("checkpoint header serializes");
        (json, params_to_blob(self.model.params()))
    }

    pub fn from_parts(json: &str, blob: &[u8]) -> Result<Self, TrainError> {
        let h: Header =
            serde_json::from_str(json).map_err(|e| TrainError::Checkpoint(e.to_string()))?;
        if h.format != FORMAT || h.version != VERSION {
            return Err(TrainError::Checkpoint(format!(
                "unsupported checkpoint {} v{}",
                h.format, h.version
            )));
        }
        let params = params_from_blob(&h.tensors, blob)?;
        let model = Model::from_parts(h.network, params)?;
        Ok(Self {
            model,
            config: h.config,
            epoch: h.epoch,
            history: h.history,
            instance_ids: h.instances,
        })
    }

    pub fn save(&self, path: &Path) -> Result<(), TrainError> {
        let (jp, bp) = checkpoint_paths(path);
        let (json, blob) = self.to_parts();
        let io = |p: &Path, e: std::io::Error| TrainError::Checkpoint(format!("{}: {e}", p.display()));
        fs::write(&jp, json).map_err(|e| io(&jp, e))?;
        fs::write(&bp, blob).map_err(|e| io(&bp, e))?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, TrainError> {
        let (jp, bp) = checkpoint_paths(path);
        let io = |p: &Path, e: std::io::Error| TrainError::Checkpoint(format!("{}: {e}", p.display()));
        let json = fs::read_to_string(&jp).map_err(|e| io(&jp, e))?;
        let blob = fs::read(&bp).map_err(|e| io(&bp, e))?;
        Self::from_parts(&json, &blob)
    }
}
