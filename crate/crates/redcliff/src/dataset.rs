//! Dataset directories: `meta.json`, `train.bin`, `val.bin`, `system.json`.

use std::path::Path;

use redcliff_core::synth::{Complexity, Sample, Split, SystemOptions, SystemSpec, WindowedDataset};
use redcliff_core::Tensor;
use serde::{Deserialize, Serialize};

use crate::binfmt;
use crate::error::{AppError, Result};

pub const DATASET_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ComplexityInfo {
    pub value: f64,
    pub category: Complexity,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct CombineInfo {
    pub sources: Vec<String>,
    pub dominant: usize,
    pub dominant_coeff: f64,
    pub background_coeff: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct DatasetMeta {
    pub format_version: u32,
    pub n_c: usize,
    /// Label width `B`.
    pub n_classes: usize,
    pub window_len: usize,
    pub train_count: usize,
    pub val_count: usize,
    pub train_class_counts: Vec<usize>,
    pub val_class_counts: Vec<usize>,
    pub seed: u64,
    pub system_seed: u64,
    pub repeat: usize,
    /// `n_c-n_e-n_k`, e.g. `6-2-2`.
    pub system: String,
    pub n_e: usize,
    pub n_k: usize,
    pub complexity: Option<ComplexityInfo>,
    pub generator: SystemOptions,
    pub combined: Option<CombineInfo>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetDir {
    pub meta: DatasetMeta,
    pub train: WindowedDataset,
    pub val: WindowedDataset,
    pub system: Option<SystemSpec>,
}

fn flatten(ds: &WindowedDataset) -> Vec<f64> {
    let mut out = Vec::with_capacity(ds.len() * (ds.n_c * ds.window_len + ds.n_classes));
    for s in &ds.samples {
        out.extend_from_slice(s.x.data());
    }
    for s in &ds.samples {
        out.extend_from_slice(&s.y);
    }
    out
}

fn unflatten(path: &Path, values: Vec<f64>, meta: &DatasetMeta, count: usize, split: Split) -> Result<WindowedDataset> {
    let xs = meta.n_c * meta.window_len;
    let want = count * (xs + meta.n_classes);
    if values.len() != want {
        return Err(AppError::format(path, format!("expected {want} values, found {}", values.len())));
    }
    let (x_part, y_part) = values.split_at(count * xs);
    let mut ds = WindowedDataset::new(meta.n_c, meta.n_classes, meta.window_len, split, meta.seed);
    for n in 0..count {
        let x = Tensor::new([meta.n_c, meta.window_len], x_part[n * xs..(n + 1) * xs].to_vec())?;
        let y = y_part[n * meta.n_classes..(n + 1) * meta.n_classes].to_vec();
        ds.push(Sample { x, y })?;
    }
    Ok(ds)
}

pub fn export_dataset(dir: &Path, data: &DatasetDir) -> Result<()> {
    binfmt::create_dir(dir)?;
    binfmt::write_json(&dir.join("meta.json"), &data.meta)?;
    binfmt::write(&dir.join("train.bin"), &flatten(&data.train))?;
    binfmt::write(&dir.join("val.bin"), &flatten(&data.val))?;
    if let Some(sys) = &data.system {
        binfmt::write_json(&dir.join("system.json"), sys)?;
    }
    Ok(())
}

pub fn read_meta(dir: &Path) -> Result<DatasetMeta> {
    let path = dir.join("meta.json");
    let raw: serde_json::Value = binfmt::read_json(&path)?;
    let found = raw.get("format_version").and_then(|v| v.as_u64()).unwrap_or(0) as u32;
    if found != DATASET_VERSION {
        return Err(AppError::UnsupportedVersion {
            path,
            found,
            expected: DATASET_VERSION,
        });
    }
    serde_json::from_value(raw).map_err(AppError::json(&path))
}

pub fn read_system(dir: &Path) -> Result<Option<SystemSpec>> {
    let path = dir.join("system.json");
    if !path.exists() {
        return Ok(None);
    }
    binfmt::read_json(&path).map(Some)
}

pub fn import_dataset(dir: &Path) -> Result<DatasetDir> {
    let meta = read_meta(dir)?;
    let tp = dir.join("train.bin");
    let vp = dir.join("val.bin");
    let train = unflatten(&tp, binfmt::read(&tp)?, &meta, meta.train_count, Split::Train)?;
    let val = unflatten(&vp, binfmt::read(&vp)?, &meta, meta.val_count, Split::Val)?;
    let system = read_system(dir)?;
    Ok(DatasetDir { meta, train, val, system })
}
