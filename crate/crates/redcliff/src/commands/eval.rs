use std::path::{Path, PathBuf};

use clap::Args;
use redcliff_core::eval::{match_factors, model_naive_delta, score_graph, standardize, GraphEstimate};
use redcliff_core::model::{enumerate_examples, Batch, RedcliffModel};
use redcliff_core::synth::SystemSpec;
use redcliff_core::Tensor;
use serde::Serialize;

use crate::binfmt;
use crate::checkpoint::{load_checkpoint, CheckpointMeta};
use crate::dataset::{import_dataset, read_meta, DatasetMeta};
use crate::error::{AppError, Result};
use crate::lock::DirLock;
use crate::manifest::ManifestBuilder;
use crate::report::{top_k_edges, write_rows_csv, EvalReport, FactorRow, TopEdges, REPORT_VERSION};
use crate::svg::{normalize_by_max, render, Heatmap, Scale};

#[derive(Debug, Clone, Args, Serialize)]
pub struct EvalArgs {
    /// Checkpoint directory, or a training run directory (uses its best/).
    #[arg(long)]
    pub model: PathBuf,
    /// Dataset directory holding system.json, or a system.json file.
    #[arg(long)]
    pub truth: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 10)]
    pub top_k: usize,
    /// Difference heatmap between two estimated factors, as `a:b`.
    #[arg(long = "diff")]
    pub diffs: Vec<String>,
    /// Method name in the report; defaults to the checkpoint's.
    #[arg(long)]
    pub method: Option<String>,
    /// System label; defaults to the dataset's.
    #[arg(long)]
    pub system: Option<String>,
    #[arg(long)]
    pub repeat: Option<usize>,
    /// Window stride for the label-head baseline on validation data.
    #[arg(long, default_value_t = 8)]
    pub position_stride: usize,
}

pub fn resolve_checkpoint(path: &Path) -> PathBuf {
    if path.join("model.json").exists() {
        path.to_path_buf()
    } else {
        path.join("best")
    }
}

fn load_truth(path: &Path) -> Result<(SystemSpec, Option<DatasetMeta>)> {
    if path.is_dir() {
        let meta = read_meta(path)?;
        let sys = crate::dataset::read_system(path)?
            .ok_or_else(|| AppError::validation(format!("{} has no system.json to score against", path.display())))?;
        Ok((sys, Some(meta)))
    } else {
        Ok((binfmt::read_json(path)?, None))
    }
}

fn parse_diff(s: &str, n: usize) -> Result<(usize, usize)> {
    let bad = || AppError::validation(format!("--diff expects a:b with estimate indices below {n}, got {s:?}"));
    let (a, b) = s.split_once(':').ok_or_else(bad)?;
    let a: usize = a.trim().parse().map_err(|_| bad())?;
    let b: usize = b.trim().parse().map_err(|_| bad())?;
    if a >= n || b >= n {
        return Err(bad());
    }
    Ok((a, b))
}

fn zero_diagonal(m: &Tensor) -> Vec<f64> {
    let n = m.shape()[0];
    m.data().iter().enumerate().map(|(i, v)| if i / n == i % n { 0.0 } else { *v }).collect()
}

fn naive_delta(model: &RedcliffModel, truth: &Path, stride: usize) -> Result<Option<f64>> {
    let b = model.config.n_supervised;
    if b == 0 || !truth.is_dir() {
        return Ok(None);
    }
    let ds = import_dataset(truth)?;
    if ds.val.n_classes < b || ds.val.is_empty() {
        return Ok(None);
    }
    let cfg = &model.config;
    let ex = enumerate_examples(&ds.val, cfg.context_len(), stride.max(1))?;
    let batches = ex
        .chunks(256)
        .map(|c| Batch::gather(&ds.val, c, cfg.tau_in, cfg.tau_cl))
        .collect::<redcliff_core::Result<Vec<_>>>()?;
    Ok(Some(model_naive_delta(model, &batches)?))
}

/// Scores every true factor against its matched estimate.
pub fn score_rows(meta: &CheckpointMeta, model: &RedcliffModel, truth: &SystemSpec, system: &str, repeat: usize, method: &str) -> Result<(GraphEstimate, GraphEstimate, Vec<FactorRow>)> {
    let n = truth.n_c;
    if model.config.n_c != n {
        return Err(AppError::validation(format!("model has {} channels, truth has {n}", model.config.n_c)));
    }
    let truth_mats = truth
        .factors
        .iter()
        .map(|f| Tensor::new([n, n], f.lag_summed_abs()))
        .collect::<redcliff_core::Result<Vec<_>>>()?;
    let truth_est = GraphEstimate::new(truth_mats, "truth")?;
    let est = standardize(&model.summed_adjacencies(), truth_est.len(), method)?;
    let pairs = match_factors(&est, &truth_est, meta.matching_supervised)?;
    let mut rows = Vec::with_capacity(truth_est.len());
    for k in 0..truth_est.len() {
        let mut row = FactorRow {
            system: system.to_string(),
            repeat,
            method: method.to_string(),
            factor: k,
            estimate: None,
            f1: None,
            threshold: None,
            roc_auc: None,
            shd_upper: None,
            shd_lower: None,
        };
        if let Some(p) = pairs.iter().find(|p| p.truth == k) {
            let s = score_graph(&est.matrices[p.estimate], &truth_est.matrices[k])?;
            row.estimate = Some(p.estimate);
            row.f1 = s.f1;
            row.threshold = s.threshold;
            row.roc_auc = s.roc_auc;
            row.shd_upper = s.shd_upper;
            row.shd_lower = s.shd_lower;
        }
        rows.push(row);
    }
    Ok((est, truth_est, rows))
}

pub fn write_svgs(dir: &Path, heatmaps: &[Heatmap]) -> Result<Vec<String>> {
    let mut names = Vec::with_capacity(heatmaps.len());
    for h in heatmaps {
        let name = format!("{}.svg", h.name);
        let path = dir.join(&name);
        std::fs::write(&path, render(h)).map_err(AppError::io(&path))?;
        names.push(name);
    }
    Ok(names)
}

fn write_top_edges(path: &Path, tops: &[TopEdges]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["estimate", "rank", "from", "to", "score"])?;
    for t in tops {
        for (r, e) in t.edges.iter().enumerate() {
            w.write_record([t.estimate.to_string(), (r + 1).to_string(), e.from.to_string(), e.to.to_string(), e.score.to_string()])?;
        }
    }
    w.flush().map_err(AppError::io(path))
}

pub fn run(a: &EvalArgs) -> Result<EvalReport> {
    let ckpt = resolve_checkpoint(&a.model);
    binfmt::create_dir(&a.out)?;
    let _lock = DirLock::acquire(&a.out)?;
    let manifest = ManifestBuilder::start("eval", serde_json::to_value(a).expect("args serialize"), None, &[ckpt.as_path(), a.truth.as_path()])?;
    let (meta, model) = load_checkpoint(&ckpt)?;
    let (truth, dmeta) = load_truth(&a.truth)?;
    let system = a
        .system
        .clone()
        .or_else(|| dmeta.as_ref().map(|m| m.system.clone()))
        .unwrap_or_else(|| format!("{}-{}-{}", truth.n_c, truth.n_e, truth.n_k()));
    let repeat = a.repeat.or(dmeta.as_ref().map(|m| m.repeat)).unwrap_or(0);
    let method = a.method.clone().unwrap_or_else(|| meta.method.clone());
    let (est, truth_est, rows) = score_rows(&meta, &model, &truth, &system, repeat, &method)?;
    let n = truth.n_c;

    let mut heatmaps = Vec::new();
    let mut top_edges = Vec::new();
    // replicas of a lone graph are identical, so plot the raw estimates
    let raw = model.summed_adjacencies();
    for (e, m) in raw.iter().enumerate() {
        let off = zero_diagonal(m);
        top_edges.push(TopEdges {
            estimate: e,
            edges: top_k_edges(&off, n, a.top_k),
        });
        heatmaps.push(Heatmap {
            name: format!("factor_{e}"),
            title: format!("{method} factor {e} (normalized)"),
            n,
            values: normalize_by_max(&off),
            scale: Scale::Sequential,
        });
    }
    for (k, m) in truth_est.matrices.iter().enumerate() {
        heatmaps.push(Heatmap {
            name: format!("truth_{k}"),
            title: format!("{system} true factor {k} (normalized)"),
            n,
            values: normalize_by_max(&zero_diagonal(m)),
            scale: Scale::Sequential,
        });
    }
    for d in &a.diffs {
        let (x, y) = parse_diff(d, raw.len())?;
        let vx = normalize_by_max(&zero_diagonal(&raw[x]));
        let vy = normalize_by_max(&zero_diagonal(&raw[y]));
        heatmaps.push(Heatmap {
            name: format!("diff_{x}_{y}"),
            title: format!("{method} factor {x} minus factor {y} (normalized)"),
            n,
            values: vx.iter().zip(&vy).map(|(p, q)| p - q).collect(),
            scale: Scale::Diverging,
        });
    }
    let _ = est;

    let report = EvalReport {
        format_version: REPORT_VERSION,
        system,
        repeat,
        method,
        rows,
        naive_delta: naive_delta(&model, &a.truth, a.position_stride)?,
        top_k: a.top_k,
        top_edges,
        heatmaps,
    };
    binfmt::write_json(&a.out.join("report.json"), &report)?;
    write_rows_csv(&a.out.join("report.csv"), &report.rows)?;
    write_top_edges(&a.out.join("top_edges.csv"), &report.top_edges)?;
    let mut outputs = vec!["report.json".to_string(), "report.csv".into(), "top_edges.csv".into()];
    outputs.extend(write_svgs(&a.out, &report.heatmaps)?);
    manifest.finish(&a.out, outputs)?;
    Ok(report)
}
