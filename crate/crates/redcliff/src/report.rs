//! Evaluation and summary report files.

use std::collections::BTreeMap;
use std::path::Path;

use redcliff_core::eval::{comparative_placement, mean_sem, pairwise_improvement, Direction, MeanSem};
use serde::{Deserialize, Serialize};

use crate::binfmt;
use crate::error::{AppError, Result};
use crate::svg::Heatmap;

pub const REPORT_VERSION: u32 = 1;

/// Scores for one true factor of one evaluated run.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct FactorRow {
    pub system: String,
    pub repeat: usize,
    pub method: String,
    pub factor: usize,
    pub estimate: Option<usize>,
    pub f1: Option<f64>,
    pub threshold: Option<f64>,
    pub roc_auc: Option<f64>,
    pub shd_upper: Option<usize>,
    pub shd_lower: Option<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct Edge {
    pub from: usize,
    pub to: usize,
    pub score: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct TopEdges {
    pub estimate: usize,
    pub edges: Vec<Edge>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct EvalReport {
    pub format_version: u32,
    pub system: String,
    pub repeat: usize,
    pub method: String,
    pub rows: Vec<FactorRow>,
    /// Label-head gain over the all-ones predictor on validation data.
    pub naive_delta: Option<f64>,
    pub top_k: usize,
    pub top_edges: Vec<TopEdges>,
    pub heatmaps: Vec<Heatmap>,
}

/// Largest `k` positive off-diagonal entries of a row-major `n × n`
/// matrix, highest first; ties keep row-major order.
pub fn top_k_edges(values: &[f64], n: usize, k: usize) -> Vec<Edge> {
    let mut edges: Vec<Edge> = (0..n)
        .flat_map(|i| (0..n).map(move |j| (i, j)))
        .filter(|(i, j)| i != j && values[i * n + j] > 0.0)
        .map(|(i, j)| Edge {
            from: j,
            to: i,
            score: values[i * n + j],
        })
        .collect();
    edges.sort_by(|a, b| b.score.total_cmp(&a.score));
    edges.truncate(k);
    edges
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x}")).unwrap_or_default()
}

fn opt_u(v: Option<usize>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub const ROW_HEADER: [&str; 10] = [
    "system", "repeat", "method", "factor", "estimate", "f1", "threshold", "roc_auc", "shd_upper", "shd_lower",
];

pub fn write_rows_csv(path: &Path, rows: &[FactorRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(ROW_HEADER)?;
    for r in rows {
        w.write_record([
            r.system.clone(),
            r.repeat.to_string(),
            r.method.clone(),
            r.factor.to_string(),
            opt_u(r.estimate),
            opt(r.f1),
            opt(r.threshold),
            opt(r.roc_auc),
            opt_u(r.shd_upper),
            opt_u(r.shd_lower),
        ])?;
    }
    w.flush().map_err(AppError::io(path))
}

pub fn read_eval_report(path: &Path) -> Result<EvalReport> {
    let raw: serde_json::Value = binfmt::read_json(path)?;
    let found = raw.get("format_version").and_then(|v| v.as_u64()).unwrap_or(0) as u32;
    if found != REPORT_VERSION {
        return Err(AppError::UnsupportedVersion {
            path: path.to_path_buf(),
            found,
            expected: REPORT_VERSION,
        });
    }
    serde_json::from_value(raw).map_err(AppError::json(path))
}

pub const METRICS: [(&str, Direction); 4] = [
    ("f1", Direction::HigherBetter),
    ("roc_auc", Direction::HigherBetter),
    ("shd_upper", Direction::LowerBetter),
    ("shd_lower", Direction::LowerBetter),
];

pub fn metric(row: &FactorRow, name: &str) -> Option<f64> {
    match name {
        "f1" => row.f1,
        "roc_auc" => row.roc_auc,
        "shd_upper" => row.shd_upper.map(|v| v as f64),
        "shd_lower" => row.shd_lower.map(|v| v as f64),
        _ => None,
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct Aggregate {
    pub system: String,
    pub method: String,
    pub metric: String,
    pub mean: f64,
    pub sem: f64,
    pub count: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct Placement {
    pub system: String,
    pub method: String,
    pub mean_rank: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct Improvement {
    pub system: String,
    pub method: String,
    pub reference: String,
    pub metric: String,
    pub mean: f64,
    pub sem: f64,
    pub count: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct SummaryReport {
    pub format_version: u32,
    pub reference: Option<String>,
    pub rows: Vec<FactorRow>,
    pub aggregates: Vec<Aggregate>,
    pub placement: Vec<Placement>,
    pub improvements: Vec<Improvement>,
}

/// Mean ± SEM per (system, method, metric) over the defined rows, the
/// per-system placement of methods, and improvements over `reference`
/// keyed by (repeat, factor).
pub fn summarize(rows: Vec<FactorRow>, reference: Option<&str>) -> Result<SummaryReport> {
    let mut groups: BTreeMap<(String, String), Vec<&FactorRow>> = BTreeMap::new();
    for r in &rows {
        groups.entry((r.system.clone(), r.method.clone())).or_default().push(r);
    }
    let mut aggregates = Vec::new();
    let mut means: BTreeMap<(String, String), Vec<Option<f64>>> = BTreeMap::new();
    for ((system, method), rs) in &groups {
        let mut cells = Vec::new();
        for (name, _) in METRICS {
            let vals: Vec<f64> = rs.iter().filter_map(|r| metric(r, name)).collect();
            match mean_sem(&vals) {
                Ok(MeanSem { mean, sem, count }) => {
                    aggregates.push(Aggregate {
                        system: system.clone(),
                        method: method.clone(),
                        metric: name.into(),
                        mean,
                        sem,
                        count,
                    });
                    cells.push(Some(mean));
                }
                Err(_) => cells.push(None),
            }
        }
        means.insert((system.clone(), method.clone()), cells);
    }

    let mut placement = Vec::new();
    let systems: Vec<String> = groups.keys().map(|k| k.0.clone()).collect::<std::collections::BTreeSet<_>>().into_iter().collect();
    let dirs: Vec<Direction> = METRICS.iter().map(|m| m.1).collect();
    for system in &systems {
        let methods: Vec<&String> = means.keys().filter(|k| &k.0 == system).map(|k| &k.1).collect();
        let table: Vec<Vec<Option<f64>>> = methods.iter().map(|m| means[&(system.clone(), (*m).clone())].clone()).collect();
        if let Ok(ranks) = comparative_placement(&table, &dirs) {
            for (m, r) in methods.iter().zip(ranks) {
                placement.push(Placement {
                    system: system.clone(),
                    method: (*m).clone(),
                    mean_rank: r,
                });
            }
        }
    }

    let mut improvements = Vec::new();
    if let Some(reference) = reference {
        for ((system, method), rs) in &groups {
            if method == reference {
                continue;
            }
            let Some(base) = groups.get(&(system.clone(), reference.to_string())) else {
                continue;
            };
            for (name, dir) in METRICS {
                let key = |r: &&FactorRow| (r.repeat, r.factor);
                let a: Vec<((usize, usize), f64)> = rs.iter().filter_map(|r| metric(r, name).map(|v| (key(r), v))).collect();
                let b: Vec<((usize, usize), f64)> = base.iter().filter_map(|r| metric(r, name).map(|v| (key(r), v))).collect();
                if a.is_empty() {
                    continue;
                }
                let ms = pairwise_improvement(&a, &b).map_err(|e| {
                    AppError::validation(format!("{system}/{method} vs {reference} on {name}: {e}"))
                })?;
                // report improvements so that positive always means better
                let sign = if dir == Direction::HigherBetter { 1.0 } else { -1.0 };
                improvements.push(Improvement {
                    system: system.clone(),
                    method: method.clone(),
                    reference: reference.to_string(),
                    metric: name.into(),
                    mean: sign * ms.mean,
                    sem: ms.sem,
                    count: ms.count,
                });
            }
        }
    }
    Ok(SummaryReport {
        format_version: REPORT_VERSION,
        reference: reference.map(str::to_string),
        rows,
        aggregates,
        placement,
        improvements,
    })
}

pub fn write_summary(dir: &Path, s: &SummaryReport) -> Result<Vec<String>> {
    binfmt::write_json(&dir.join("report.json"), s)?;
    write_rows_csv(&dir.join("report.csv"), &s.rows)?;
    let mut w = csv::Writer::from_path(dir.join("aggregate.csv"))?;
    w.write_record(["system", "method", "metric", "mean", "sem", "count"])?;
    for a in &s.aggregates {
        w.write_record([a.system.clone(), a.method.clone(), a.metric.clone(), a.mean.to_string(), a.sem.to_string(), a.count.to_string()])?;
    }
    w.flush().map_err(AppError::io(dir))?;
    let mut w = csv::Writer::from_path(dir.join("placement.csv"))?;
    w.write_record(["system", "method", "mean_rank"])?;
    for p in &s.placement {
        w.write_record([p.system.clone(), p.method.clone(), p.mean_rank.to_string()])?;
    }
    w.flush().map_err(AppError::io(dir))?;
    let mut w = csv::Writer::from_path(dir.join("improvement.csv"))?;
    w.write_record(["system", "method", "reference", "metric", "mean", "sem", "count"])?;
    for i in &s.improvements {
        w.write_record([
            i.system.clone(),
            i.method.clone(),
            i.reference.clone(),
            i.metric.clone(),
            i.mean.to_string(),
            i.sem.to_string(),
            i.count.to_string(),
        ])?;
    }
    w.flush().map_err(AppError::io(dir))?;
    Ok(["report.json", "report.csv", "aggregate.csv", "placement.csv", "improvement.csv"]
        .iter()
        .map(|s| s.to_string())
        .collect())
}
