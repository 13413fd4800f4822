//! Three-phase schedule, validation criterion and ablations.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::model::{enumerate_examples, Batch, Example, LossCoefficients, LossValues, ModelConfig, Objective, RedcliffModel};
use crate::ops;
use crate::optim::{AdamConfig, AdamState};
use crate::rng::Rng;
use crate::synth::WindowedDataset;
use crate::tensor::ParamGroup;

/// One-at-a-time ablations. At most one may be set.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Ablations {
    pub rho_zero: bool,
    pub single_factor: bool,
    pub alpha_pinned_one: bool,
    pub lambda_zero: bool,
}

impl Ablations {
    pub fn count(&self) -> usize {
        [self.rho_zero, self.single_factor, self.alpha_pinned_one, self.lambda_zero]
            .iter()
            .filter(|f| **f)
            .count()
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TrainConfig {
    pub eta: f64,
    pub omega: f64,
    pub rho: f64,
    pub gamma: f64,
    pub lambda: f64,
    pub gen_lr: f64,
    pub embed_lr: f64,
    pub weight_decay: f64,
    pub eps: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub batch_size: usize,
    /// Joint-training epochs.
    pub max_iter: usize,
    pub pretrain_epochs: usize,
    pub acclimation_epochs: usize,
    /// Step between forecast positions inside a sample window.
    pub position_stride: usize,
    /// Extra weight on the cosine term of the validation criterion.
    pub criterion_cos_multiplier: f64,
    /// Threshold `c_b` for reading behaviors off `ŷ`.
    pub behavior_threshold: f64,
    pub ablations: Ablations,
    pub seed: u64,
}

/// `ρ = 1 / Σ_{i=1}^{n_k−1} i`, or 0 with a single factor.
pub fn default_rho(n_k: usize) -> f64 {
    let pairs = n_k * n_k.saturating_sub(1) / 2;
    if pairs == 0 {
        0.0
    } else {
        1.0 / pairs as f64
    }
}

/// `η = 0.1 / (n_k · √(n_c² − 1))`; the root is floored at 1 for `n_c = 1`.
pub fn default_eta(n_c: usize, n_k: usize) -> f64 {
    let root = libm::sqrt((n_c * n_c) as f64 - 1.0).max(1.0);
    0.1 / (n_k.max(1) as f64 * root)
}

impl TrainConfig {
    pub fn defaults_for(n_c: usize, n_k: usize) -> Self {
        TrainConfig {
            eta: default_eta(n_c, n_k),
            omega: 10.0,
            rho: default_rho(n_k),
            gamma: 0.001,
            lambda: 100.0,
            gen_lr: 5e-4,
            embed_lr: 5e-4,
            weight_decay: 1e-4,
            eps: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            batch_size: 128,
            max_iter: 300,
            pretrain_epochs: 100,
            acclimation_epochs: 100,
            position_stride: 1,
            criterion_cos_multiplier: 1.0,
            behavior_threshold: 0.5,
            ablations: Ablations::default(),
            seed: 0,
        }
    }

    pub fn coefficients(&self) -> LossCoefficients {
        LossCoefficients {
            eta: self.eta,
            omega: self.omega,
            rho: self.rho,
            gamma: self.gamma,
            lambda: self.lambda,
        }
    }

    fn adam(&self, lr: f64) -> AdamConfig {
        AdamConfig {
            learning_rate: lr,
            beta1: self.beta1,
            beta2: self.beta2,
            epsilon: self.eps,
            weight_decay: self.weight_decay,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let nonneg = [self.eta, self.omega, self.rho, self.gamma, self.lambda, self.criterion_cos_multiplier];
        if nonneg.iter().any(|c| !(c.is_finite() && *c >= 0.0)) {
            return Err(Error::invalid("loss coefficients must be finite and nonnegative"));
        }
        let pos = [self.gen_lr, self.embed_lr, self.eps];
        if pos.iter().any(|c| !(c.is_finite() && *c > 0.0)) || !(self.weight_decay >= 0.0) {
            return Err(Error::invalid("learning rates and eps must be positive"));
        }
        if self.batch_size == 0 || self.position_stride == 0 {
            return Err(Error::invalid("batch size and position stride must be positive"));
        }
        if self.ablations.count() > 1 {
            return Err(Error::MultipleAblations);
        }
        Ok(())
    }
}

/// Resolves the active ablation into plain config changes.
///
/// `single_factor` collapses to one factor with pinned weights and no
/// supervision, so the model is the plain base forecaster.
pub fn apply_ablation(cfg: &TrainConfig, model: &ModelConfig) -> Result<(TrainConfig, ModelConfig)> {
    let a = cfg.ablations;
    if a.count() > 1 {
        return Err(Error::MultipleAblations);
    }
    let (mut c, mut m) = (cfg.clone(), model.clone());
    if a.rho_zero {
        c.rho = 0.0;
    }
    if a.lambda_zero {
        c.lambda = 0.0;
    }
    if a.alpha_pinned_one {
        m.alpha_pinned = true;
    }
    if a.single_factor {
        m.n_k = 1;
        m.n_supervised = 0;
        m.alpha_pinned = true;
        c.rho = 0.0;
        c.lambda = 0.0;
        c.gamma = 0.0;
        c.pretrain_epochs = 0;
    }
    Ok((c, m))
}

/// Validation criterion and its parts.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CriterionParts {
    pub forecast: f64,
    pub label: f64,
    pub cos_sim: f64,
    pub value: f64,
}

impl CriterionParts {
    pub fn recombine(&self, omega: f64, lambda: f64, rho: f64) -> f64 {
        omega * self.forecast + lambda * self.label + rho * self.cos_sim
    }
}

/// `Σ_{p<q} cos(ᵖÃ/max ᵖÃ, ᵠÃ/max ᵠÃ)`; a graph whose max is below
/// `1e-12` normalizes to zeros.
pub fn normalized_graph_cosine(model: &RedcliffModel) -> Result<f64> {
    let mats: Vec<Vec<f64>> = model
        .summed_adjacencies()
        .into_iter()
        .map(|a| {
            let max = a.data().iter().fold(f64::NEG_INFINITY, |m, v| m.max(*v));
            if max < 1e-12 {
                alloc::vec![0.0; a.len()]
            } else {
                a.data().iter().map(|v| v / max).collect()
            }
        })
        .collect();
    ops::pairwise_cosine_sum(&mats)
}

/// `ω·forecast MSE + λ·label MSE + ρ·m·graph cosine` over validation batches,
/// with the MSEs averaged over all validation elements.
pub fn stopping_criterion(model: &RedcliffModel, val: &[Batch], cfg: &TrainConfig) -> Result<CriterionParts> {
    if val.iter().all(|b| b.is_empty()) {
        return Err(Error::EmptyDataset);
    }
    let b = model.config.n_supervised;
    let (mut se, mut n) = (0.0, 0usize);
    let (mut lse, mut ln) = (0.0, 0usize);
    for batch in val {
        let pred = model.predict(batch)?;
        se += pred.data().iter().zip(batch.targets.data()).map(|(p, t)| (p - t) * (p - t)).sum::<f64>();
        n += pred.len();
        if b > 0 {
            let (_, y) = model.predict_state(batch)?;
            let have = batch.labels.shape()[1];
            for (idx, yh) in y.data().iter().enumerate() {
                let d = yh - batch.labels.data()[(idx / b) * have + idx % b];
                lse += d * d;
            }
            ln += y.len();
        }
    }
    let forecast = se / n as f64;
    let label = if ln > 0 { lse / ln as f64 } else { 0.0 };
    let cos_sim = normalized_graph_cosine(model)?;
    let rho = cfg.rho * cfg.criterion_cos_multiplier;
    let value = cfg.omega * forecast + cfg.lambda * label + rho * cos_sim;
    Ok(CriterionParts {
        forecast,
        label,
        cos_sim,
        value,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Phase {
    Pretrain,
    Acclimation,
    Joint,
}

impl Phase {
    pub fn name(self) -> &'static str {
        match self {
            Phase::Pretrain => "pretrain",
            Phase::Acclimation => "acclimation",
            Phase::Joint => "joint",
        }
    }
}

/// Mean training loss terms of one epoch.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub phase: Phase,
    pub epoch: usize,
    pub train: LossValues,
    pub criterion: Option<CriterionParts>,
}

/// Joint-phase checkpoint summary. `path` is filled in by whoever
/// persists the weights.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CheckpointRecord {
    pub epoch: usize,
    pub criterion: CriterionParts,
    pub path: Option<alloc::string::String>,
}

/// Index of the record with the smallest criterion (first on ties).
pub fn select_best(records: &[CheckpointRecord]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, r) in records.iter().enumerate() {
        match best {
            Some(b) if records[b].criterion.value <= r.criterion.value => {}
            _ => best = Some(i),
        }
    }
    best
}

/// Training and validation examples expanded into fixed batches.
#[derive(Debug, Clone)]
pub struct PreparedData {
    pub train: WindowedDataset,
    pub train_examples: Vec<Example>,
    pub val_batches: Vec<Batch>,
}

impl PreparedData {
    pub fn new(train: WindowedDataset, val: &WindowedDataset, model: &ModelConfig, cfg: &TrainConfig) -> Result<Self> {
        if train.n_c != model.n_c || val.n_c != model.n_c {
            return Err(Error::invalid("dataset channel count does not match the model"));
        }
        let train_examples = enumerate_examples(&train, model.context_len(), cfg.position_stride)?;
        let val_examples = enumerate_examples(val, model.context_len(), cfg.position_stride)?;
        if train_examples.is_empty() || val_examples.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let val_batches = val_examples
            .chunks(cfg.batch_size)
            .map(|c| Batch::gather(val, c, model.tau_in, model.tau_cl))
            .collect::<Result<Vec<_>>>()?;
        Ok(PreparedData {
            train,
            train_examples,
            val_batches,
        })
    }
}

/// Holds the shuffling stream across phases.
#[derive(Debug, Clone)]
pub struct Trainer {
    pub cfg: TrainConfig,
    rng: Rng,
}

impl Trainer {
    pub fn new(cfg: TrainConfig) -> Result<Self> {
        cfg.validate()?;
        let rng = Rng::stream(cfg.seed, 20);
        Ok(Trainer { cfg, rng })
    }

    fn run_epoch(
        &mut self,
        model: &mut RedcliffModel,
        data: &PreparedData,
        objective: Objective,
        optimizers: &mut [AdamState],
        phase: Phase,
        epoch: usize,
    ) -> Result<LossValues> {
        let mut order: Vec<usize> = (0..data.train_examples.len()).collect();
        self.rng.shuffle(&mut order);
        let coeffs = self.cfg.coefficients();
        let mut sum = LossValues::default();
        let mut batches = 0usize;
        for chunk in order.chunks(self.cfg.batch_size) {
            let ex: Vec<Example> = chunk.iter().map(|i| data.train_examples[*i]).collect();
            let batch = Batch::gather(&data.train, &ex, model.config.tau_in, model.config.tau_cl)?;
            let v = model.backward(&batch, &coeffs, objective)?;
            if !v.total.is_finite() {
                return Err(Error::Diverged {
                    phase: phase.name(),
                    epoch,
                });
            }
            for opt in optimizers.iter_mut() {
                opt.step(&mut model.store)?;
            }
            model.project();
            if model.store.iter().any(|(_, p)| p.tensor.data().iter().any(|x| !x.is_finite())) {
                return Err(Error::Diverged {
                    phase: phase.name(),
                    epoch,
                });
            }
            accumulate(&mut sum, &v);
            batches += 1;
        }
        Ok(scale_values(&sum, 1.0 / batches as f64))
    }

    fn optimizer(&self, model: &RedcliffModel, group: ParamGroup, lr: f64) -> AdamState {
        AdamState::new(self.cfg.adam(lr), model.store.ids_in(group), &model.store)
    }

    /// Trains only the state model on `L_g + λ·label MSE`.
    pub fn pretrain_state(&mut self, model: &mut RedcliffModel, data: &PreparedData) -> Result<Vec<EpochRecord>> {
        model.store.set_group_requires_grad(ParamGroup::Factor, false);
        model.store.set_group_requires_grad(ParamGroup::State, true);
        let mut opt = [self.optimizer(model, ParamGroup::State, self.cfg.embed_lr)];
        let mut out = Vec::with_capacity(self.cfg.pretrain_epochs);
        for epoch in 0..self.cfg.pretrain_epochs {
            let train = self.run_epoch(model, data, Objective::State, &mut opt, Phase::Pretrain, epoch)?;
            out.push(EpochRecord {
                phase: Phase::Pretrain,
                epoch,
                train,
                criterion: None,
            });
        }
        model.store.set_all_requires_grad(true);
        Ok(out)
    }

    /// Trains only the factors on `L_f` with the state model frozen.
    pub fn acclimate_factors(&mut self, model: &mut RedcliffModel, data: &PreparedData) -> Result<Vec<EpochRecord>> {
        model.store.set_group_requires_grad(ParamGroup::Factor, true);
        model.store.set_group_requires_grad(ParamGroup::State, false);
        let mut opt = [self.optimizer(model, ParamGroup::Factor, self.cfg.gen_lr)];
        let mut out = Vec::with_capacity(self.cfg.acclimation_epochs);
        for epoch in 0..self.cfg.acclimation_epochs {
            let train = self.run_epoch(model, data, Objective::Factors, &mut opt, Phase::Acclimation, epoch)?;
            out.push(EpochRecord {
                phase: Phase::Acclimation,
                epoch,
                train,
                criterion: None,
            });
        }
        model.store.set_all_requires_grad(true);
        Ok(out)
    }

    /// Trains everything on the full objective, scoring the validation
    /// criterion after every epoch.
    pub fn joint_train(&mut self, model: &mut RedcliffModel, data: &PreparedData) -> Result<JointOutcome> {
        model.store.set_all_requires_grad(true);
        let mut opt = [
            self.optimizer(model, ParamGroup::Factor, self.cfg.gen_lr),
            self.optimizer(model, ParamGroup::State, self.cfg.embed_lr),
        ];
        let mut history = Vec::with_capacity(self.cfg.max_iter);
        let mut records: Vec<CheckpointRecord> = Vec::with_capacity(self.cfg.max_iter);
        let mut best: Option<(usize, Vec<f64>)> = None;
        for epoch in 0..self.cfg.max_iter {
            let train = self.run_epoch(model, data, Objective::Full, &mut opt, Phase::Joint, epoch)?;
            let crit = stopping_criterion(model, &data.val_batches, &self.cfg)?;
            if !crit.value.is_finite() {
                return Err(Error::Diverged { phase: "joint", epoch });
            }
            let improved = match &best {
                Some((b, _)) => crit.value < records[*b].criterion.value,
                None => true,
            };
            records.push(CheckpointRecord {
                epoch,
                criterion: crit,
                path: None,
            });
            if improved {
                best = Some((records.len() - 1, model.store.flatten()));
            }
            history.push(EpochRecord {
                phase: Phase::Joint,
                epoch,
                train,
                criterion: Some(crit),
            });
        }
        Ok(JointOutcome {
            history,
            records,
            best: best.map(|(index, params)| BestCheckpoint { index, params }),
        })
    }

    /// Runs pretraining, acclimation and joint training in order.
    pub fn fit(&mut self, model: &mut RedcliffModel, data: &PreparedData) -> Result<JointOutcome> {
        let mut history = self.pretrain_state(model, data)?;
        history.extend(self.acclimate_factors(model, data)?);
        let mut joint = self.joint_train(model, data)?;
        history.append(&mut joint.history);
        joint.history = history;
        Ok(joint)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BestCheckpoint {
    /// Index into `records`.
    pub index: usize,
    pub params: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct JointOutcome {
    pub history: Vec<EpochRecord>,
    pub records: Vec<CheckpointRecord>,
    pub best: Option<BestCheckpoint>,
}

fn accumulate(sum: &mut LossValues, v: &LossValues) {
    sum.lag_penalty += v.lag_penalty;
    sum.forecast_mse += v.forecast_mse;
    sum.cosine += v.cosine;
    sum.alpha_l1 += v.alpha_l1;
    sum.label_mse += v.label_mse;
    sum.loss_f += v.loss_f;
    sum.loss_g += v.loss_g;
    sum.total += v.total;
}

fn scale_values(v: &LossValues, s: f64) -> LossValues {
    LossValues {
        lag_penalty: v.lag_penalty * s,
        forecast_mse: v.forecast_mse * s,
        cosine: v.cosine * s,
        alpha_l1: v.alpha_l1 * s,
        label_mse: v.label_mse * s,
        loss_f: v.loss_f * s,
        loss_g: v.loss_g * s,
        total: v.total * s,
    }
}
