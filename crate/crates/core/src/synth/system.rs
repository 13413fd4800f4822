use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::ops::{nrelu, relu};
use crate::rng::Rng;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum EdgeActivation {
    Linear,
    Relu,
    Nrelu,
}

impl EdgeActivation {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            EdgeActivation::Linear => x,
            EdgeActivation::Relu => relu(x),
            EdgeActivation::Nrelu => nrelu(x),
        }
    }
}

/// One VAR factor of a ground-truth system.
///
/// `weights[i, j, l]` is the effect of node `j`, `l + 1` steps in the past,
/// on node `i`. `activations` uses the same flat indexing.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct VarFactorSpec {
    pub weights: Tensor,
    pub activations: Vec<EdgeActivation>,
    pub amp: Vec<f64>,
    pub innov_mu: Vec<f64>,
    pub innov_var: Vec<f64>,
    pub base_freq: Vec<f64>,
}

impl VarFactorSpec {
    pub fn n_c(&self) -> usize {
        self.weights.shape()[0]
    }

    pub fn lags(&self) -> usize {
        self.weights.shape()[2]
    }

    pub fn weight(&self, i: usize, j: usize, lag: usize) -> f64 {
        self.weights.at3(i, j, lag)
    }

    pub fn activation(&self, i: usize, j: usize, lag: usize) -> EdgeActivation {
        let (n, l) = (self.n_c(), self.lags());
        self.activations[(i * n + j) * l + lag]
    }

    /// Number of off-diagonal `(i, j)` pairs with a nonzero weight at some lag.
    pub fn inter_edge_count(&self) -> usize {
        let n = self.n_c();
        (0..n)
            .flat_map(|i| (0..n).map(move |j| (i, j)))
            .filter(|&(i, j)| i != j && (0..self.lags()).any(|l| self.weight(i, j, l) != 0.0))
            .count()
    }

    /// Lag-summed absolute weights, `n_c × n_c` row-major.
    pub fn lag_summed_abs(&self) -> Vec<f64> {
        let n = self.n_c();
        let mut out = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                out[i * n + j] = (0..self.lags()).map(|l| libm::fabs(self.weight(i, j, l))).sum();
            }
        }
        out
    }

    /// Off-diagonal edge presence, `n_c × n_c` row-major; diagonal is false.
    pub fn edge_mask(&self) -> Vec<bool> {
        let n = self.n_c();
        let summed = self.lag_summed_abs();
        (0..n * n).map(|idx| idx / n != idx % n && summed[idx] != 0.0).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SystemSpec {
    pub n_c: usize,
    pub n_e: usize,
    pub lags: usize,
    pub factors: Vec<VarFactorSpec>,
    pub mix_noise_std: f64,
    pub burn_in: usize,
    pub knot_spacing: usize,
}

impl SystemSpec {
    pub fn n_k(&self) -> usize {
        self.factors.len()
    }

    pub fn complexity(&self) -> Result<(f64, Complexity)> {
        complexity_rating(self.n_c, self.n_e)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum Complexity {
    Low,
    Moderate,
    High,
}

/// `(n_c² − n_c) / n_e`, with Low ≤ 7 < Moderate ≤ 13 < High.
pub fn complexity_rating(n_c: usize, n_e: usize) -> Result<(f64, Complexity)> {
    let possible = n_c * n_c - n_c;
    if n_c < 2 {
        return Err(Error::invalid("complexity rating needs at least two nodes"));
    }
    if n_e == 0 {
        return Err(Error::Undefined("complexity rating with zero edges"));
    }
    if n_e > possible {
        return Err(Error::invalid("more edges than off-diagonal pairs"));
    }
    let value = possible as f64 / n_e as f64;
    let category = if value <= 7.0 {
        Complexity::Low
    } else if value <= 13.0 {
        Complexity::Moderate
    } else {
        Complexity::High
    };
    Ok((value, category))
}

/// Generator knobs. Defaults follow the reference synthetic benchmark.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SystemOptions {
    pub lags: usize,
    pub mix_noise_std: f64,
    pub burn_in: usize,
    pub knot_spacing: usize,
    pub amp: f64,
    pub innov_mu: f64,
    pub innov_var: f64,
    /// Rejection floor on |weight| so every declared edge is visible.
    pub min_edge_magnitude: f64,
    /// Upper bound on the spectral radius of the lag-collapsed |weights|.
    pub spectral_bound: f64,
}

impl Default for SystemOptions {
    fn default() -> Self {
        SystemOptions {
            lags: 2,
            mix_noise_std: 0.1,
            burn_in: 50,
            knot_spacing: 100,
            amp: 1.0,
            innov_mu: 0.0,
            innov_var: 0.0,
            min_edge_magnitude: 0.1,
            spectral_bound: 0.95,
        }
    }
}

fn base_frequencies(n_c: usize) -> Vec<f64> {
    (0..n_c)
        .map(|i| core::f64::consts::PI * (i * 707 + i % 2) as f64 / 120_000.0)
        .collect()
}

pub fn build_system(n_c: usize, n_e: usize, n_k: usize, seed: u64) -> Result<SystemSpec> {
    build_system_with(n_c, n_e, n_k, seed, &SystemOptions::default())
}

pub fn build_system_with(n_c: usize, n_e: usize, n_k: usize, seed: u64, opts: &SystemOptions) -> Result<SystemSpec> {
    if n_c == 0 {
        return Err(Error::invalid("n_c must be positive"));
    }
    if n_e > n_c * n_c - n_c {
        return Err(Error::invalid("n_e exceeds the number of off-diagonal pairs"));
    }
    if n_k == 0 {
        return Err(Error::invalid("n_k must be at least 1"));
    }
    if opts.lags == 0 {
        return Err(Error::invalid("lags must be at least 1"));
    }
    if !(opts.min_edge_magnitude >= 0.0 && opts.min_edge_magnitude < 1.0) {
        return Err(Error::invalid("min_edge_magnitude must lie in [0, 1)"));
    }
    let mut rng = Rng::stream(seed, 0);
    let off_diag: Vec<(usize, usize)> = (0..n_c)
        .flat_map(|i| (0..n_c).map(move |j| (i, j)))
        .filter(|(i, j)| i != j)
        .collect();
    let lags = opts.lags;
    let mut factors = Vec::with_capacity(n_k);
    for _ in 0..n_k {
        let mut weights = Tensor::zeros([n_c, n_c, lags]);
        let mut activations = vec![EdgeActivation::Linear; n_c * n_c * lags];
        let idx = |i: usize, j: usize, l: usize| (i * n_c + j) * lags + l;
        for i in 0..n_c {
            weights.data_mut()[idx(i, i, 0)] = draw_weight(&mut rng, opts.min_edge_magnitude);
        }
        for pick in rng.sample_distinct(off_diag.len(), n_e) {
            let (i, j) = off_diag[pick];
            let lag = rng.index(lags);
            weights.data_mut()[idx(i, j, lag)] = draw_weight(&mut rng, opts.min_edge_magnitude);
            activations[idx(i, j, lag)] = match rng.index(3) {
                0 => EdgeActivation::Linear,
                1 => EdgeActivation::Relu,
                _ => EdgeActivation::Nrelu,
            };
        }
        let mut factor = VarFactorSpec {
            weights,
            activations,
            amp: vec![opts.amp; n_c],
            innov_mu: vec![opts.innov_mu; n_c],
            innov_var: vec![opts.innov_var; n_c],
            base_freq: base_frequencies(n_c),
        };
        let bound = lag_collapsed_bound(&factor);
        if bound > opts.spectral_bound {
            let s = opts.spectral_bound / bound;
            factor.weights.data_mut().iter_mut().for_each(|w| *w *= s);
        }
        factors.push(factor);
    }
    Ok(SystemSpec {
        n_c,
        n_e,
        lags,
        factors,
        mix_noise_std: opts.mix_noise_std,
        burn_in: opts.burn_in,
        knot_spacing: opts.knot_spacing,
    })
}

fn draw_weight(rng: &mut Rng, floor: f64) -> f64 {
    loop {
        let w = rng.uniform_range(-1.0, 1.0);
        if w != 0.0 && libm::fabs(w) >= floor {
            return w;
        }
    }
}

/// Collatz–Wielandt upper bound on the spectral radius of the lag-collapsed
/// absolute weight matrix `M[i, j] = Σ_l |w[i, j, l]|`.
///
/// Every activation has slope at most one, so a bound below one makes the
/// recurrence contractive.
pub fn lag_collapsed_bound(factor: &VarFactorSpec) -> f64 {
    let n = factor.n_c();
    let m = factor.lag_summed_abs();
    let mut v = vec![1.0; n];
    let mut best = f64::INFINITY;
    for _ in 0..500 {
        let mv: Vec<f64> = (0..n)
            .map(|i| (0..n).map(|j| m[i * n + j] * v[j]).sum::<f64>())
            .collect();
        let ratio = (0..n).map(|i| mv[i] / v[i]).fold(0.0, f64::max);
        best = best.min(ratio);
        let norm = mv.iter().cloned().fold(0.0, f64::max);
        if norm == 0.0 {
            return 0.0;
        }
        // keep v strictly positive so the ratio stays a valid bound
        v = mv.iter().map(|x| x / norm + 1e-9).collect();
    }
    best
}
