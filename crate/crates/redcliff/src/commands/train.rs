use std::path::{Path, PathBuf};

use clap::Args;
use redcliff_core::model::RedcliffModel;
use redcliff_core::training::{CheckpointRecord, EpochRecord, PreparedData, Trainer};
use serde::Serialize;

use crate::binfmt;
use crate::checkpoint::save_checkpoint;
use crate::config::{ResolvedRun, RunConfigFile};
use crate::dataset::import_dataset;
use crate::error::{AppError, Result};
use crate::lock::DirLock;
use crate::manifest::ManifestBuilder;

#[derive(Debug, Clone, Args, Serialize)]
pub struct TrainArgs {
    /// Dataset directory (meta.json, train.bin, val.bin).
    #[arg(long)]
    pub data: PathBuf,
    /// JSON run config; unset fields take defaults.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    /// One of none, rho_zero, single_factor, alpha_pinned_one, lambda_zero.
    #[arg(long)]
    pub ablation: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
}

pub const HISTORY_HEADER: [&str; 15] = [
    "phase",
    "epoch",
    "lag_penalty",
    "forecast_mse",
    "cosine",
    "alpha_l1",
    "label_mse",
    "loss_f",
    "loss_g",
    "total",
    "val_forecast",
    "val_label",
    "val_cos_sim",
    "criterion",
    "best",
];

fn write_history(path: &Path, history: &[EpochRecord], best_epoch: Option<usize>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(HISTORY_HEADER)?;
    for h in history {
        let t = &h.train;
        let crit = |f: fn(&redcliff_core::training::CriterionParts) -> f64| h.criterion.as_ref().map(|c| f(c).to_string()).unwrap_or_default();
        let is_best = h.criterion.is_some() && Some(h.epoch) == best_epoch;
        w.write_record([
            h.phase.name().to_string(),
            h.epoch.to_string(),
            t.lag_penalty.to_string(),
            t.forecast_mse.to_string(),
            t.cosine.to_string(),
            t.alpha_l1.to_string(),
            t.label_mse.to_string(),
            t.loss_f.to_string(),
            t.loss_g.to_string(),
            t.total.to_string(),
            crit(|c| c.forecast),
            crit(|c| c.label),
            crit(|c| c.cos_sim),
            crit(|c| c.value),
            if is_best { "1".into() } else { String::new() },
        ])?;
    }
    w.flush().map_err(AppError::io(path))
}

/// Merges the config file with command-line overrides.
pub fn load_config(a: &TrainArgs) -> Result<RunConfigFile> {
    let mut file = match &a.config {
        Some(p) => RunConfigFile::load(p)?,
        None => RunConfigFile::default(),
    };
    if a.ablation.is_some() {
        file.ablation = a.ablation.clone();
    }
    if a.seed.is_some() {
        file.seed = a.seed;
    }
    Ok(file)
}

pub fn run(a: &TrainArgs) -> Result<ResolvedRun> {
    let file = load_config(a)?;
    let meta = crate::dataset::read_meta(&a.data)?;
    let resolved = file.resolve(meta.n_c, meta.n_classes)?;
    binfmt::create_dir(&a.out)?;
    let _lock = DirLock::acquire(&a.out)?;
    let mut inputs: Vec<&Path> = vec![a.data.as_path()];
    if let Some(c) = &a.config {
        inputs.push(c.as_path());
    }
    let manifest = ManifestBuilder::start(
        "train",
        serde_json::to_value(&resolved).expect("config serializes"),
        Some(resolved.train.seed),
        &inputs,
    )?;
    binfmt::write_json(&a.out.join("train.json"), &resolved)?;

    let ds = import_dataset(&a.data)?;
    let mut model = RedcliffModel::new(resolved.model.clone(), resolved.train.seed)?;
    let data = PreparedData::new(ds.train, &ds.val, &resolved.model, &resolved.train)?;
    let mut trainer = Trainer::new(resolved.train.clone())?;
    let outcome = trainer.fit(&mut model, &data)?;

    // graphs only tie to label indices when the label head was trained
    let matching = if resolved.train.lambda > 0.0 { resolved.model.n_supervised } else { 0 };
    let last_epoch = outcome.records.last().map(|r| r.epoch);
    save_checkpoint(&a.out.join("final"), &model, &resolved.method, matching, last_epoch)?;
    let best_epoch = match &outcome.best {
        Some(b) => {
            model.store.load_flat(&b.params)?;
            let epoch = outcome.records[b.index].epoch;
            save_checkpoint(&a.out.join("best"), &model, &resolved.method, matching, Some(epoch))?;
            Some(epoch)
        }
        // no joint epochs: the final weights are the only candidate
        None => {
            save_checkpoint(&a.out.join("best"), &model, &resolved.method, matching, None)?;
            None
        }
    };
    let records: Vec<CheckpointRecord> = outcome
        .records
        .iter()
        .map(|r| CheckpointRecord {
            path: (Some(r.epoch) == best_epoch).then(|| "best".to_string()),
            ..r.clone()
        })
        .collect();
    binfmt::write_json(&a.out.join("checkpoints.json"), &records)?;
    write_history(&a.out.join("history.csv"), &outcome.history, best_epoch)?;
    let outputs = ["train.json", "history.csv", "checkpoints.json", "best", "final"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    manifest.finish(&a.out, outputs)?;
    Ok(resolved)
}
