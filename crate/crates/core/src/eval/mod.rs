//! Graph standardization, scoring metrics and aggregate statistics.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::model::{Batch, RedcliffModel};
use crate::tensor::Tensor;

/// One `n_c × n_c` nonnegative score matrix per estimated factor.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct GraphEstimate {
    pub matrices: Vec<Tensor>,
    pub source: String,
}

impl GraphEstimate {
    pub fn new(matrices: Vec<Tensor>, source: impl Into<String>) -> Result<Self> {
        let n = matrices.first().map(|m| m.shape().first().copied().unwrap_or(0)).unwrap_or(0);
        for m in &matrices {
            if m.shape() != [n, n] {
                return Err(Error::shape("GraphEstimate", &[n, n], m.shape()));
            }
        }
        Ok(GraphEstimate {
            matrices,
            source: source.into(),
        })
    }

    pub fn n_c(&self) -> usize {
        self.matrices.first().map(|m| m.shape()[0]).unwrap_or(0)
    }

    pub fn len(&self) -> usize {
        self.matrices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.matrices.is_empty()
    }
}

/// Collapses every estimate to `n_c × n_c` by summing trailing axes; a
/// lone graph is copied once per true factor.
pub fn standardize(estimates: &[Tensor], n_true_factors: usize, source: &str) -> Result<GraphEstimate> {
    let mut mats = Vec::with_capacity(estimates.len());
    for e in estimates {
        let s = e.shape();
        if s.len() < 2 || s[0] != s[1] {
            return Err(Error::shape("standardize", &[s.first().copied().unwrap_or(0); 2], s));
        }
        let n = s[0];
        let inner: usize = s[2..].iter().product();
        mats.push(Tensor::from_fn([n, n], |idx| e.data()[idx * inner..(idx + 1) * inner].iter().sum()));
    }
    if mats.len() == 1 && n_true_factors > 1 {
        let m = mats[0].clone();
        mats = vec![m; n_true_factors];
    }
    GraphEstimate::new(mats, source)
}

/// Row-major off-diagonal entries of a square matrix.
pub fn off_diagonal(m: &Tensor) -> Vec<f64> {
    let n = m.shape()[0];
    let mut out = Vec::with_capacity(n * n.saturating_sub(1));
    for i in 0..n {
        for j in 0..n {
            if i != j {
                out.push(m.at2(i, j));
            }
        }
    }
    out
}

/// Off-diagonal edge presence of a true weighted graph (nonzero test).
pub fn binarize_truth(m: &Tensor) -> Vec<bool> {
    off_diagonal(m).into_iter().map(|v| v != 0.0).collect()
}

fn check_scores(scores: &[f64], labels: &[bool]) -> Result<()> {
    if scores.len() != labels.len() {
        return Err(Error::shape("scores", &[labels.len()], &[scores.len()]));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::invalid("NaN score"));
    }
    Ok(())
}

fn f1_at(scores: &[f64], labels: &[bool], threshold: f64) -> f64 {
    let (mut tp, mut fp, mut fne) = (0usize, 0usize, 0usize);
    for (s, l) in scores.iter().zip(labels) {
        match (*s > threshold, *l) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fne += 1,
            _ => {}
        }
    }
    if tp == 0 {
        0.0
    } else {
        2.0 * tp as f64 / (2 * tp + fp + fne) as f64
    }
}

/// Candidate cut points: `−∞`, midpoints between sorted unique scores, `+∞`.
pub fn candidate_thresholds(scores: &[f64]) -> Vec<f64> {
    let mut u: Vec<f64> = scores.to_vec();
    u.sort_by(f64::total_cmp);
    u.dedup();
    let mut out = Vec::with_capacity(u.len() + 1);
    out.push(f64::NEG_INFINITY);
    for w in u.windows(2) {
        out.push(w[0] + (w[1] - w[0]) / 2.0);
    }
    out.push(f64::INFINITY);
    out
}

/// Best F1 over all cut points (predict positive when `score > t`) and the
/// lowest threshold achieving it.
pub fn optimal_f1(scores: &[f64], labels: &[bool]) -> Result<(f64, f64)> {
    check_scores(scores, labels)?;
    if !labels.iter().any(|l| *l) {
        return Err(Error::Undefined("F1 needs at least one positive label"));
    }
    let mut best = (f64::NEG_INFINITY, f64::NEG_INFINITY);
    for t in candidate_thresholds(scores) {
        let f = f1_at(scores, labels, t);
        if f > best.0 {
            best = (f, t);
        }
    }
    Ok(best)
}

/// Mann–Whitney AUC with ties counted as one half.
pub fn roc_auc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    check_scores(scores, labels)?;
    let pos = labels.iter().filter(|l| **l).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::Undefined("ROC-AUC needs both classes"));
    }
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|a, b| scores[*a].total_cmp(&scores[*b]));
    // twice the average rank, kept integral
    let mut rank_sum2 = 0u64;
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && scores[idx[j + 1]] == scores[idx[i]] {
            j += 1;
        }
        let twice_avg = (i + 1 + j + 1) as u64;
        for k in &idx[i..=j] {
            if labels[*k] {
                rank_sum2 += twice_avg;
            }
        }
        i = j + 1;
    }
    let u2 = rank_sum2 as f64 - (pos * (pos + 1)) as f64;
    Ok(u2 / (2.0 * pos as f64 * neg as f64))
}

/// Disagreements in the strict upper and strict lower triangles.
pub fn shd_split(pred: &[bool], truth: &[bool], n: usize) -> Result<(usize, usize)> {
    if pred.len() != n * n || truth.len() != n * n {
        return Err(Error::shape("shd_split", &[n * n], &[pred.len(), truth.len()]));
    }
    let (mut upper, mut lower) = (0, 0);
    for i in 0..n {
        for j in 0..n {
            if pred[i * n + j] != truth[i * n + j] {
                if i < j {
                    upper += 1;
                } else if i > j {
                    lower += 1;
                }
            }
        }
    }
    Ok((upper, lower))
}

/// Scores of one estimated graph against one true graph. `None` marks a
/// metric that is undefined for this truth (e.g. no true edges).
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct FactorScores {
    pub f1: Option<f64>,
    pub threshold: Option<f64>,
    pub roc_auc: Option<f64>,
    pub shd_upper: Option<usize>,
    pub shd_lower: Option<usize>,
}

/// Off-diagonal scoring; the SHD binarizes the estimate at its optimal-F1
/// threshold.
pub fn score_graph(estimate: &Tensor, truth: &Tensor) -> Result<FactorScores> {
    let n = truth.shape()[0];
    if estimate.shape() != truth.shape() || truth.shape() != [n, n] {
        return Err(Error::shape("score_graph", truth.shape(), estimate.shape()));
    }
    let scores = off_diagonal(estimate);
    let labels = binarize_truth(truth);
    let f1 = match optimal_f1(&scores, &labels) {
        Ok(v) => Some(v),
        Err(Error::Undefined(_)) => None,
        Err(e) => return Err(e),
    };
    let auc = match roc_auc(&scores, &labels) {
        Ok(v) => Some(v),
        Err(Error::Undefined(_)) => None,
        Err(e) => return Err(e),
    };
    let shd = match f1 {
        Some((_, t)) => {
            let pred: Vec<bool> = estimate.data().iter().map(|v| *v > t).collect();
            let tru: Vec<bool> = truth.data().iter().map(|v| *v != 0.0).collect();
            Some(shd_split(&pred, &tru, n)?)
        }
        None => None,
    };
    Ok(FactorScores {
        f1: f1.map(|v| v.0),
        threshold: f1.map(|v| v.1),
        roc_auc: auc,
        shd_upper: shd.map(|s| s.0),
        shd_lower: shd.map(|s| s.1),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Pairing {
    pub estimate: usize,
    pub truth: usize,
}

/// Pairs the first `supervised` estimates with the truths of the same
/// index, then greedily pairs what is left by highest optimal F1. Pairs
/// with undefined F1 come last; ties go to the lowest indices.
pub fn match_factors(est: &GraphEstimate, truth: &GraphEstimate, supervised: usize) -> Result<Vec<Pairing>> {
    if !est.is_empty() && !truth.is_empty() && est.n_c() != truth.n_c() {
        return Err(Error::shape("match_factors", &[truth.n_c()], &[est.n_c()]));
    }
    let fixed = supervised.min(est.len()).min(truth.len());
    let mut out: Vec<Pairing> = (0..fixed).map(|i| Pairing { estimate: i, truth: i }).collect();
    let mut free_e: Vec<usize> = (fixed..est.len()).collect();
    let mut free_t: Vec<usize> = (fixed..truth.len()).collect();
    let mut table = vec![vec![f64::NEG_INFINITY; truth.len()]; est.len()];
    for e in &free_e {
        for t in &free_t {
            let labels = binarize_truth(&truth.matrices[*t]);
            table[*e][*t] = match optimal_f1(&off_diagonal(&est.matrices[*e]), &labels) {
                Ok((f, _)) => f,
                Err(Error::Undefined(_)) => f64::NEG_INFINITY,
                Err(err) => return Err(err),
            };
        }
    }
    while !free_e.is_empty() && !free_t.is_empty() {
        let mut best: Option<(usize, usize)> = None;
        for (ei, e) in free_e.iter().enumerate() {
            for (ti, t) in free_t.iter().enumerate() {
                match best {
                    Some((be, bt)) if table[free_e[be]][free_t[bt]] >= table[*e][*t] => {}
                    _ => best = Some((ei, ti)),
                }
            }
        }
        let (ei, ti) = best.expect("nonempty");
        out.push(Pairing {
            estimate: free_e.remove(ei),
            truth: free_t.remove(ti),
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct MeanSem {
    pub mean: f64,
    pub sem: f64,
    pub count: usize,
}

/// Mean and standard error (sample standard deviation over `√n`); a single
/// value has SEM 0.
pub fn mean_sem(values: &[f64]) -> Result<MeanSem> {
    if values.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let sem = if values.len() < 2 {
        0.0
    } else {
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
        libm::sqrt(var) / libm::sqrt(n)
    };
    Ok(MeanSem {
        mean,
        sem,
        count: values.len(),
    })
}

/// Mean and SEM of `a − b` over a shared key set.
pub fn pairwise_improvement<K: Ord + Clone>(a: &[(K, f64)], b: &[(K, f64)]) -> Result<MeanSem> {
    let mut a: Vec<_> = a.to_vec();
    let mut b: Vec<_> = b.to_vec();
    a.sort_by(|x, y| x.0.cmp(&y.0));
    b.sort_by(|x, y| x.0.cmp(&y.0));
    if a.len() != b.len() || a.iter().zip(&b).any(|(x, y)| x.0 != y.0) || a.windows(2).any(|w| w[0].0 == w[1].0) {
        return Err(Error::invalid("pairwise improvement needs identical index sets"));
    }
    let diffs: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x.1 - y.1).collect();
    mean_sem(&diffs)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Direction {
    HigherBetter,
    LowerBetter,
}

/// Mean rank (1 = best) of each method across metrics; ties share the
/// mean of their ranks.
pub fn comparative_placement(table: &[Vec<Option<f64>>], directions: &[Direction]) -> Result<Vec<f64>> {
    let m = directions.len();
    let mut cells = Vec::with_capacity(table.len());
    for row in table {
        if row.len() != m {
            return Err(Error::shape("comparative_placement", &[m], &[row.len()]));
        }
        let vals = row
            .iter()
            .map(|c| c.filter(|v| !v.is_nan()).ok_or(Error::invalid("missing placement cell")))
            .collect::<Result<Vec<f64>>>()?;
        cells.push(vals);
    }
    let n = table.len();
    let mut ranks = vec![0.0; n];
    for (metric, dir) in directions.iter().enumerate() {
        let key = |i: usize| match dir {
            Direction::HigherBetter => -cells[i][metric],
            Direction::LowerBetter => cells[i][metric],
        };
        for i in 0..n {
            let better = (0..n).filter(|j| key(*j) < key(i)).count();
            let tied = (0..n).filter(|j| key(*j) == key(i)).count();
            ranks[i] += better as f64 + (tied as f64 + 1.0) / 2.0;
        }
    }
    if m > 0 {
        ranks.iter_mut().for_each(|r| *r /= m as f64);
    }
    Ok(ranks)
}

/// Mean over rows of `MSE(y, 1) − MSE(y, ŷ)` for `[N, B]` label tensors.
pub fn naive_baseline_delta(y: &Tensor, y_hat: &Tensor) -> Result<f64> {
    if y.shape() != y_hat.shape() || y.shape().len() != 2 {
        return Err(Error::shape("naive_baseline_delta", y.shape(), y_hat.shape()));
    }
    let (n, b) = (y.shape()[0], y.shape()[1]);
    if n == 0 || b == 0 {
        return Err(Error::EmptyDataset);
    }
    let mut total = 0.0;
    for r in 0..n {
        let row = &y.data()[r * b..(r + 1) * b];
        let pred = &y_hat.data()[r * b..(r + 1) * b];
        let naive = crate::ops::mse(row, &vec![1.0; b])?;
        total += naive - crate::ops::mse(row, pred)?;
    }
    Ok(total / n as f64)
}

/// [`naive_baseline_delta`] of a model's label head over batches.
pub fn model_naive_delta(model: &RedcliffModel, batches: &[Batch]) -> Result<f64> {
    let b = model.config.n_supervised;
    if b == 0 {
        return Err(Error::invalid("model has no supervised factors"));
    }
    let (mut sum, mut rows) = (0.0, 0usize);
    for batch in batches {
        let (_, y_hat) = model.predict_state(batch)?;
        let have = batch.labels.shape()[1];
        let y = Tensor::from_fn([batch.len(), b], |idx| batch.labels.data()[(idx / b) * have + idx % b]);
        sum += naive_baseline_delta(&y, &y_hat)? * batch.len() as f64;
        rows += batch.len();
    }
    if rows == 0 {
        return Err(Error::EmptyDataset);
    }
    Ok(sum / rows as f64)
}
