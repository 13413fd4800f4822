//! Training config files: every field optional, resolved against the dataset.

use std::path::Path;

use redcliff_core::model::ModelConfig;
use redcliff_core::training::{apply_ablation, Ablations, TrainConfig};
use serde::{Deserialize, Serialize};

use crate::binfmt;
use crate::error::{AppError, Result};

#[derive(Debug, Clone, Default, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfigFile {
    pub n_k: Option<usize>,
    pub n_supervised: Option<usize>,
    pub tau_in: Option<usize>,
    pub tau_cl: Option<usize>,
    pub factor_hidden: Option<Vec<usize>>,
    pub state_hidden: Option<Vec<usize>>,
    pub alpha_sigmoid: Option<bool>,
    pub eta: Option<f64>,
    pub omega: Option<f64>,
    pub rho: Option<f64>,
    pub gamma: Option<f64>,
    pub lambda: Option<f64>,
    pub gen_lr: Option<f64>,
    pub embed_lr: Option<f64>,
    pub weight_decay: Option<f64>,
    pub eps: Option<f64>,
    pub beta1: Option<f64>,
    pub beta2: Option<f64>,
    pub batch_size: Option<usize>,
    pub max_iter: Option<usize>,
    pub pretrain_epochs: Option<usize>,
    pub acclimation_epochs: Option<usize>,
    pub position_stride: Option<usize>,
    pub criterion_cos_multiplier: Option<f64>,
    pub behavior_threshold: Option<f64>,
    pub ablation: Option<String>,
    pub seed: Option<u64>,
}

/// Fully resolved run settings, as written to `train.json`.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ResolvedRun {
    pub method: String,
    pub model: ModelConfig,
    pub train: TrainConfig,
}

pub const ABLATIONS: [&str; 4] = ["rho_zero", "single_factor", "alpha_pinned_one", "lambda_zero"];

pub fn parse_ablation(name: &str) -> Result<Ablations> {
    let mut a = Ablations::default();
    match name {
        "none" | "full" => {}
        "rho_zero" => a.rho_zero = true,
        "single_factor" => a.single_factor = true,
        "alpha_pinned_one" => a.alpha_pinned_one = true,
        "lambda_zero" => a.lambda_zero = true,
        other => {
            return Err(AppError::validation(format!(
                "unknown ablation {other:?}; expected one of none, {}",
                ABLATIONS.join(", ")
            )))
        }
    }
    Ok(a)
}

pub fn method_name(a: &Ablations) -> &'static str {
    if a.rho_zero {
        "rho_zero"
    } else if a.single_factor {
        "single_factor"
    } else if a.alpha_pinned_one {
        "alpha_pinned_one"
    } else if a.lambda_zero {
        "lambda_zero"
    } else {
        "full"
    }
}

impl RunConfigFile {
    pub fn load(path: &Path) -> Result<Self> {
        binfmt::read_json(path)
    }

    /// Fills unset fields from defaults for `n_c` channels and `n_labels`
    /// label columns, then applies the ablation.
    pub fn resolve(&self, n_c: usize, n_labels: usize) -> Result<ResolvedRun> {
        let n_k = self.n_k.unwrap_or(n_labels.max(1));
        let n_sup = self.n_supervised.unwrap_or(n_labels.min(n_k));
        let defaults = ModelConfig::new(n_c, n_k, n_sup);
        let model = ModelConfig {
            tau_in: self.tau_in.unwrap_or(defaults.tau_in),
            tau_cl: self.tau_cl.unwrap_or(defaults.tau_cl),
            factor_hidden: self.factor_hidden.clone().unwrap_or(defaults.factor_hidden.clone()),
            state_hidden: self.state_hidden.clone().unwrap_or(defaults.state_hidden.clone()),
            alpha_sigmoid: self.alpha_sigmoid.unwrap_or(false),
            ..defaults
        };
        let d = TrainConfig::defaults_for(n_c, n_k);
        let ablations = match &self.ablation {
            Some(name) => parse_ablation(name)?,
            None => Ablations::default(),
        };
        let train = TrainConfig {
            eta: self.eta.unwrap_or(d.eta),
            omega: self.omega.unwrap_or(d.omega),
            rho: self.rho.unwrap_or(d.rho),
            gamma: self.gamma.unwrap_or(d.gamma),
            lambda: self.lambda.unwrap_or(d.lambda),
            gen_lr: self.gen_lr.unwrap_or(d.gen_lr),
            embed_lr: self.embed_lr.unwrap_or(d.embed_lr),
            weight_decay: self.weight_decay.unwrap_or(d.weight_decay),
            eps: self.eps.unwrap_or(d.eps),
            beta1: self.beta1.unwrap_or(d.beta1),
            beta2: self.beta2.unwrap_or(d.beta2),
            batch_size: self.batch_size.unwrap_or(d.batch_size),
            max_iter: self.max_iter.unwrap_or(d.max_iter),
            pretrain_epochs: self.pretrain_epochs.unwrap_or(d.pretrain_epochs),
            acclimation_epochs: self.acclimation_epochs.unwrap_or(d.acclimation_epochs),
            position_stride: self.position_stride.unwrap_or(d.position_stride),
            criterion_cos_multiplier: self.criterion_cos_multiplier.unwrap_or(d.criterion_cos_multiplier),
            behavior_threshold: self.behavior_threshold.unwrap_or(d.behavior_threshold),
            ablations,
            seed: self.seed.unwrap_or(d.seed),
        };
        if train.lambda > 0.0 && model.n_supervised > 0 && n_labels == 0 {
            return Err(AppError::validation("λ > 0 needs labelled data, but the dataset has B = 0"));
        }
        if model.n_supervised > n_labels {
            return Err(AppError::validation(format!(
                "n_supervised = {} exceeds the dataset's {} label columns",
                model.n_supervised, n_labels
            )));
        }
        let (train, model) = apply_ablation(&train, &model)?;
        if train.lambda > 0.0 && model.n_supervised == 0 && !ablations.single_factor {
            return Err(AppError::validation(format!(
                "λ > 0 needs supervised factors and labelled data (dataset has B = {n_labels}); set lambda to 0 or use the lambda_zero ablation"
            )));
        }
        model.validate()?;
        train.validate()?;
        Ok(ResolvedRun {
            method: method_name(&ablations).to_string(),
            model,
            train,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_follow_dataset() {
        let r = RunConfigFile::default().resolve(6, 2).unwrap();
        assert_eq!((r.model.n_k, r.model.n_supervised, r.model.tau_in, r.model.context_len()), (2, 2, 4, 16));
        assert_eq!(r.method, "full");
        let single = RunConfigFile {
            ablation: Some("single_factor".into()),
            ..Default::default()
        }
        .resolve(6, 2)
        .unwrap();
        assert_eq!(single.model.n_k, 1);
    }

    #[test]
    fn lambda_without_labels_is_rejected() {
        let err = RunConfigFile::default().resolve(6, 0).unwrap_err();
        assert_eq!(err.exit_code(), 2);
        let ok = RunConfigFile {
            lambda: Some(0.0),
            ..Default::default()
        };
        assert!(ok.resolve(6, 0).is_ok());
        assert!(parse_ablation("bogus").is_err());
        let bad = serde_json::from_str::<RunConfigFile>(r#"{"lamda": 1}"#);
        assert!(bad.is_err());
    }
}
