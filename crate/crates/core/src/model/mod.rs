//! Factor forecasters, the state model and the composite objective.

mod batch;
mod dense;
mod factor;
mod state;

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::tensor::{ParamStore, Tensor};

pub use batch::{enumerate_examples, Batch, Example};
pub use dense::Dense;
pub use factor::{extract_adjacency, factor_forward, lag_features, lag_sum, FactorNet, LaggedAdjacency};
pub use state::{affine_forward, affine_inverse, state_forward, AffineHead, StateModel, StateVars, MIN_HEAD_SCALE};

/// Architecture of a [`RedcliffModel`].
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ModelConfig {
    pub n_c: usize,
    pub n_k: usize,
    /// Number of supervised factors `B`.
    pub n_supervised: usize,
    pub tau_in: usize,
    pub tau_cl: usize,
    pub factor_hidden: Vec<usize>,
    pub state_hidden: Vec<usize>,
    pub alpha_sigmoid: bool,
    /// Replace the factor weights with ones in the composite forecast.
    pub alpha_pinned: bool,
}

impl ModelConfig {
    pub fn new(n_c: usize, n_k: usize, n_supervised: usize) -> Self {
        ModelConfig {
            n_c,
            n_k,
            n_supervised,
            tau_in: 4,
            tau_cl: 12,
            factor_hidden: vec![25],
            state_hidden: vec![100],
            alpha_sigmoid: false,
            alpha_pinned: false,
        }
    }

    pub fn context_len(&self) -> usize {
        self.tau_in + self.tau_cl
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_c == 0 || self.n_k == 0 {
            return Err(Error::invalid("n_c and n_k must be positive"));
        }
        if self.n_supervised > self.n_k {
            return Err(Error::invalid(format!(
                "supervised factors B={} exceed n_k={}",
                self.n_supervised, self.n_k
            )));
        }
        if self.tau_in == 0 || self.tau_cl == 0 {
            return Err(Error::invalid("τ_in and τ_cl must be at least 1"));
        }
        Ok(())
    }
}

/// Loss weights for the composite objective.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct LossCoefficients {
    pub eta: f64,
    pub omega: f64,
    pub rho: f64,
    pub gamma: f64,
    pub lambda: f64,
}

impl LossCoefficients {
    pub fn zero() -> Self {
        LossCoefficients {
            eta: 0.0,
            omega: 0.0,
            rho: 0.0,
            gamma: 0.0,
            lambda: 0.0,
        }
    }

    fn validate(&self) -> Result<()> {
        let all = [self.eta, self.omega, self.rho, self.gamma, self.lambda];
        if all.iter().any(|c| !(c.is_finite() && *c >= 0.0)) {
            return Err(Error::invalid("loss coefficients must be finite and nonnegative"));
        }
        Ok(())
    }
}

/// Which part of the objective a gradient step minimizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Objective {
    /// `L_g + λ·label MSE`; the factors are not evaluated.
    State,
    /// `L_f` only.
    Factors,
    /// `L_f + L_g + λ·label MSE`.
    Full,
}

/// Values of every loss term for one batch. Raw terms are unweighted.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LossValues {
    /// `Σ_k Σ_ℓ ln(ℓ+1)·‖ᵏÂ[:,:,ℓ]‖₁`
    pub lag_penalty: f64,
    pub forecast_mse: f64,
    /// `Σ_{p<q} cos(ᵖÃ − I, ᵠÃ − I)` over off-diagonal entries
    pub cosine: f64,
    /// `−1 + Σ_n ‖α_n‖₁`
    pub alpha_l1: f64,
    pub label_mse: f64,
    pub loss_f: f64,
    pub loss_g: f64,
    pub total: f64,
}

/// Full conditional factor model: `n_k` factor networks and a state model
/// sharing one parameter store.
#[derive(Debug, Clone, PartialEq)]
pub struct RedcliffModel {
    pub config: ModelConfig,
    pub store: ParamStore,
    pub factors: Vec<FactorNet>,
    pub state: StateModel,
}

/// Single-window output of [`RedcliffModel::forward`].
#[derive(Debug, Clone, PartialEq)]
pub struct Forward {
    pub x_hat: Tensor,
    pub alpha: Vec<f64>,
    pub y_hat: Vec<f64>,
}

struct Graph {
    loss: Var,
    values: LossValues,
}

impl RedcliffModel {
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = Rng::stream(seed, 10);
        let mut store = ParamStore::new();
        let factors = (0..config.n_k)
            .map(|k| FactorNet::new(&mut store, &format!("factor{k}"), config.n_c, config.tau_in, &config.factor_hidden, &mut rng))
            .collect::<Result<Vec<_>>>()?;
        let state = StateModel::new(
            &mut store,
            config.n_c,
            config.context_len(),
            config.n_k,
            config.n_supervised,
            &config.state_hidden,
            config.alpha_sigmoid,
            &mut rng,
        )?;
        Ok(RedcliffModel {
            config,
            store,
            factors,
            state,
        })
    }

    pub fn adjacencies(&self) -> Vec<LaggedAdjacency> {
        self.factors.iter().map(|f| f.adjacency(&self.store)).collect()
    }

    /// Lag-summed graphs `ᵏÃ`, one per factor.
    pub fn summed_adjacencies(&self) -> Vec<Tensor> {
        self.adjacencies().iter().map(lag_sum).collect()
    }

    /// Composite forecast for one context window `x: [n_c, τ_in+τ_cl]`.
    pub fn forward(&self, x: &Tensor) -> Result<Forward> {
        let (n_c, len) = (self.config.n_c, self.config.context_len());
        if x.shape() != [n_c, len] {
            return Err(Error::shape("redcliff_forward", &[n_c, len], x.shape()));
        }
        let mut tape = Tape::new();
        let feats = tape.constant_raw([1, n_c * self.config.tau_in], lag_features(x, self.config.tau_in)?)?;
        let flat = tape.constant_raw([1, n_c * len], x.data().to_vec())?;
        let sv = self.state.tape_forward(&mut tape, &self.store, flat)?;
        let weights = self.mixing_weights(&mut tape, sv.alpha, 1)?;
        let x_hat = self.mix(&mut tape, feats, weights)?;
        Ok(Forward {
            x_hat: Tensor::new([n_c, 1], tape.value(x_hat).to_vec())?,
            alpha: tape.value(weights).to_vec(),
            y_hat: sv.y_hat.map(|v| tape.value(v).to_vec()).unwrap_or_default(),
        })
    }

    fn mixing_weights(&self, tape: &mut Tape, alpha: Var, n: usize) -> Result<Var> {
        if self.config.alpha_pinned {
            tape.constant_raw([n, self.config.n_k], vec![1.0; n * self.config.n_k])
        } else {
            Ok(alpha)
        }
    }

    fn mix(&self, tape: &mut Tape, feats: Var, weights: Var) -> Result<Var> {
        let mut acc: Option<Var> = None;
        for (k, f) in self.factors.iter().enumerate() {
            let out = f.tape_forward(tape, &self.store, feats)?;
            let scaled = tape.scale_by_col(out, weights, k)?;
            acc = Some(match acc {
                Some(a) => tape.add(a, scaled)?,
                None => scaled,
            });
        }
        Ok(acc.expect("n_k ≥ 1"))
    }

    /// Composite forecasts `[N, n_c]` for a batch.
    pub fn predict(&self, batch: &Batch) -> Result<Tensor> {
        let mut tape = Tape::new();
        let feats = tape.constant(&batch.factor_features);
        let flat = tape.constant(&batch.state_input);
        let sv = self.state.tape_forward(&mut tape, &self.store, flat)?;
        let w = self.mixing_weights(&mut tape, sv.alpha, batch.len())?;
        let out = self.mix(&mut tape, feats, w)?;
        Ok(tape.to_tensor(out))
    }

    /// `(α, ŷ)` for every row of a batch, as `[N, n_k]` and `[N, B]`.
    pub fn predict_state(&self, batch: &Batch) -> Result<(Tensor, Tensor)> {
        let mut tape = Tape::new();
        let flat = tape.constant(&batch.state_input);
        let sv = self.state.tape_forward(&mut tape, &self.store, flat)?;
        let y = match sv.y_hat {
            Some(v) => tape.to_tensor(v),
            None => Tensor::zeros([batch.len(), 0]),
        };
        Ok((tape.to_tensor(sv.alpha), y))
    }

    fn label_targets(&self, batch: &Batch) -> Result<Tensor> {
        let b = self.config.n_supervised;
        let (n, have) = (batch.len(), batch.labels.shape()[1]);
        if have < b {
            return Err(Error::shape("labels", &[n, b], batch.labels.shape()));
        }
        Ok(Tensor::from_fn([n, b], |idx| batch.labels.data()[(idx / b) * have + idx % b]))
    }

    fn graph(&self, tape: &mut Tape, batch: &Batch, c: &LossCoefficients, objective: Objective) -> Result<Graph> {
        c.validate()?;
        if batch.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let (n_c, tau) = (self.config.n_c, self.config.tau_in);
        if batch.factor_features.shape() != [batch.len(), n_c * tau]
            || batch.state_input.shape() != [batch.len(), n_c * self.config.context_len()]
        {
            return Err(Error::shape("batch", &[batch.len(), n_c * tau], batch.factor_features.shape()));
        }
        let mut v = LossValues::default();
        let flat = tape.constant(&batch.state_input);
        let sv = self.state.tape_forward(tape, &self.store, flat)?;

        let mut terms: Vec<Var> = Vec::new();
        if objective != Objective::Factors {
            let a1 = tape.sum_abs(sv.alpha);
            let minus_one = tape.constant(&Tensor::scalar(-1.0));
            let lg = tape.add(a1, minus_one)?;
            v.alpha_l1 = tape.scalar(lg);
            terms.push(tape.scale(lg, c.gamma));
            if let (Some(y_hat), true) = (sv.y_hat, c.lambda > 0.0) {
                let y = tape.constant(&self.label_targets(batch)?);
                let mse = tape.mse(y_hat, y)?;
                v.label_mse = tape.scalar(mse);
                terms.push(tape.scale(mse, c.lambda));
            } else if sv.y_hat.is_some() {
                v.label_mse = crate::ops::mse(
                    &sv.y_hat.map(|y| tape.value(y).to_vec()).unwrap_or_default(),
                    self.label_targets(batch)?.data(),
                )?;
            }
        }

        if objective != Objective::State {
            let feats = tape.constant(&batch.factor_features);
            let w = self.mixing_weights(tape, sv.alpha, batch.len())?;
            let x_hat = self.mix(tape, feats, w)?;
            let target = tape.constant(&batch.targets);
            let mse = tape.mse(x_hat, target)?;
            v.forecast_mse = tape.scalar(mse);
            terms.push(tape.scale(mse, c.omega));

            let lag_weights: Vec<f64> = (0..n_c * tau).map(|idx| libm::log((idx % tau + 2) as f64)).collect();
            // the identity shift discounts self-connections, so the prior
            // compares inter-variable entries only
            let mask = Tensor::from_fn([n_c, n_c], |idx| if idx / n_c == idx % n_c { 0.0 } else { 1.0 });
            let mask = tape.constant(&mask);
            let mut off_diag = Vec::with_capacity(self.factors.len());
            for f in &self.factors {
                let mut rows = Vec::with_capacity(n_c);
                for i in 0..n_c {
                    let norms = f.tape_adjacency_row(tape, &self.store, i);
                    let lp = tape.weighted_sum(norms, lag_weights.clone())?;
                    v.lag_penalty += tape.scalar(lp);
                    terms.push(tape.scale(lp, c.eta));
                    rows.push(tape.group_sum(norms, tau)?);
                }
                let summed = tape.concat_rows(&rows)?;
                off_diag.push(tape.mul(summed, mask)?);
            }
            for p in 0..off_diag.len() {
                for q in p + 1..off_diag.len() {
                    let cs = tape.cosine(off_diag[p], off_diag[q])?;
                    v.cosine += tape.scalar(cs);
                    terms.push(tape.scale(cs, c.rho));
                }
            }
            v.loss_f = c.eta * v.lag_penalty + c.omega * v.forecast_mse + c.rho * v.cosine;
        }
        v.loss_g = c.gamma * v.alpha_l1;

        let mut loss = terms[0];
        for t in &terms[1..] {
            loss = tape.add(loss, *t)?;
        }
        v.total = tape.scalar(loss);
        Ok(Graph { loss, values: v })
    }

    /// All loss terms for a batch without touching gradients.
    pub fn evaluate(&self, batch: &Batch, c: &LossCoefficients) -> Result<LossValues> {
        let mut tape = Tape::new();
        Ok(self.graph(&mut tape, batch, c, Objective::Full)?.values)
    }

    /// Zeroes gradients and back-propagates `objective` into every
    /// parameter that currently requires gradient.
    pub fn backward(&mut self, batch: &Batch, c: &LossCoefficients, objective: Objective) -> Result<LossValues> {
        let mut tape = Tape::new();
        let g = self.graph(&mut tape, batch, c, objective)?;
        self.store.zero_grads();
        tape.backward(g.loss, &mut self.store)?;
        let mut values = g.values;
        values.total = tape.scalar(g.loss);
        Ok(values)
    }

    /// Keeps the head scales away from zero after an optimizer step.
    pub fn project(&mut self) {
        self.state.project_heads(&mut self.store);
    }
}

/// `L_f = η·lag penalty + ω·forecast MSE + ρ·pairwise cosine`.
pub fn loss_f(m: &RedcliffModel, batch: &Batch, eta: f64, omega: f64, rho: f64) -> Result<f64> {
    let c = LossCoefficients {
        eta,
        omega,
        rho,
        ..LossCoefficients::zero()
    };
    let mut tape = Tape::new();
    Ok(m.graph(&mut tape, batch, &c, Objective::Factors)?.values.loss_f)
}

/// `L_g = γ·(−1 + Σ_n ‖α_n‖₁)`.
pub fn loss_g(m: &RedcliffModel, batch: &Batch, gamma: f64) -> Result<f64> {
    let c = LossCoefficients {
        gamma,
        ..LossCoefficients::zero()
    };
    let mut tape = Tape::new();
    Ok(m.graph(&mut tape, batch, &c, Objective::State)?.values.loss_g)
}

pub fn total_loss(m: &RedcliffModel, batch: &Batch, c: &LossCoefficients) -> Result<f64> {
    Ok(m.evaluate(batch, c)?.total)
}

/// The constant all-ones label prediction.
pub fn naive_state_prediction(b: usize) -> Result<Vec<f64>> {
    if b == 0 {
        return Err(Error::invalid("naive prediction needs B ≥ 1"));
    }
    Ok(vec![1.0; b])
}

/// `ŷ_b > c_b` elementwise.
pub fn behavior_presence(y_hat: &[f64], c: &[f64]) -> Result<Vec<bool>> {
    if y_hat.len() != c.len() {
        return Err(Error::shape("behavior_presence", &[c.len()], &[y_hat.len()]));
    }
    Ok(y_hat.iter().zip(c).map(|(y, t)| y > t).collect())
}
