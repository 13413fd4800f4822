//! Model checkpoints: `model.json` manifest plus `weights.bin`.

use std::path::Path;

use redcliff_core::model::{ModelConfig, RedcliffModel};
use redcliff_core::ParamGroup;
use serde::{Deserialize, Serialize};

use crate::binfmt;
use crate::error::{AppError, Result};

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ParamEntry {
    pub name: String,
    pub group: ParamGroup,
    pub shape: Vec<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct CheckpointMeta {
    pub format_version: u32,
    pub architecture: String,
    /// Name under which evaluations report this model.
    pub method: String,
    pub config: ModelConfig,
    /// Leading factors tied to label indices when matching graphs.
    pub matching_supervised: usize,
    pub epoch: Option<usize>,
    pub params: Vec<ParamEntry>,
}

pub fn save_checkpoint(dir: &Path, model: &RedcliffModel, method: &str, matching_supervised: usize, epoch: Option<usize>) -> Result<()> {
    binfmt::create_dir(dir)?;
    let params = model
        .store
        .iter()
        .map(|(_, p)| ParamEntry {
            name: p.name.clone(),
            group: p.group,
            shape: p.tensor.shape().to_vec(),
        })
        .collect();
    let meta = CheckpointMeta {
        format_version: CHECKPOINT_VERSION,
        architecture: "redcliff-cmlp".into(),
        method: method.into(),
        config: model.config.clone(),
        matching_supervised,
        epoch,
        params,
    };
    binfmt::write_json(&dir.join("model.json"), &meta)?;
    binfmt::write(&dir.join("weights.bin"), &model.store.flatten())
}

pub fn load_checkpoint(dir: &Path) -> Result<(CheckpointMeta, RedcliffModel)> {
    let path = dir.join("model.json");
    let raw: serde_json::Value = binfmt::read_json(&path)?;
    let found = raw.get("format_version").and_then(|v| v.as_u64()).unwrap_or(0) as u32;
    if found != CHECKPOINT_VERSION {
        return Err(AppError::UnsupportedVersion {
            path,
            found,
            expected: CHECKPOINT_VERSION,
        });
    }
    let meta: CheckpointMeta = serde_json::from_value(raw).map_err(AppError::json(&path))?;
    let mut model = RedcliffModel::new(meta.config.clone(), 0)?;
    let layout: Vec<ParamEntry> = model
        .store
        .iter()
        .map(|(_, p)| ParamEntry {
            name: p.name.clone(),
            group: p.group,
            shape: p.tensor.shape().to_vec(),
        })
        .collect();
    if layout != meta.params {
        return Err(AppError::format(&path, "parameter layout does not match the architecture"));
    }
    let wp = dir.join("weights.bin");
    let flat = binfmt::read(&wp)?;
    model
        .store
        .load_flat(&flat)
        .map_err(|_| AppError::format(&wp, "weight count does not match model.json"))?;
    Ok((meta, model))
}
