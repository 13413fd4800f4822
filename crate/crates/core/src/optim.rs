//! Adam with coupled L2 weight decay.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::tensor::{ParamId, ParamStore};

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub weight_decay: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            learning_rate: 5e-4,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-4,
            weight_decay: 1e-4,
        }
    }
}

/// One Adam update on a flat buffer.
///
/// The decay term `weight_decay · w` is added to the gradient before the
/// moment updates. `step` is the 1-based step index used for bias
/// correction.
pub fn adam_update(
    cfg: &AdamConfig,
    step: u64,
    weights: &mut [f64],
    grads: &[f64],
    first_moment: &mut [f64],
    second_moment: &mut [f64],
) -> Result<()> {
    let n = weights.len();
    if grads.len() != n || first_moment.len() != n || second_moment.len() != n {
        return Err(Error::shape("adam_update", &[n], &[grads.len()]));
    }
    let bc1 = 1.0 - libm::pow(cfg.beta1, step as f64);
    let bc2 = 1.0 - libm::pow(cfg.beta2, step as f64);
    for i in 0..n {
        let g = grads[i] + cfg.weight_decay * weights[i];
        first_moment[i] = cfg.beta1 * first_moment[i] + (1.0 - cfg.beta1) * g;
        second_moment[i] = cfg.beta2 * second_moment[i] + (1.0 - cfg.beta2) * g * g;
        let m_hat = first_moment[i] / bc1;
        let v_hat = second_moment[i] / bc2;
        weights[i] -= cfg.learning_rate * m_hat / (libm::sqrt(v_hat) + cfg.epsilon);
    }
    Ok(())
}

/// Optimizer state over a fixed list of parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    step_count: u64,
    params: Vec<ParamId>,
    first_moment: Vec<Vec<f64>>,
    second_moment: Vec<Vec<f64>>,
}

impl AdamState {
    pub fn new(config: AdamConfig, params: Vec<ParamId>, store: &ParamStore) -> Self {
        let first_moment: Vec<Vec<f64>> = params.iter().map(|id| vec![0.0; store.get(*id).len()]).collect();
        let second_moment = first_moment.clone();
        AdamState {
            config,
            step_count: 0,
            params,
            first_moment,
            second_moment,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    pub fn params(&self) -> &[ParamId] {
        &self.params
    }

    /// Applies one update using the gradients stored in `store`. Parameters
    /// with no gradient are treated as having a zero gradient.
    pub fn step(&mut self, store: &mut ParamStore) -> Result<()> {
        self.step_count += 1;
        for (slot, id) in self.params.iter().enumerate() {
            let t = store.get_mut(*id);
            if t.len() != self.first_moment[slot].len() {
                return Err(Error::shape("adam_step", &[self.first_moment[slot].len()], t.shape()));
            }
            let grad = match t.grad() {
                Some(g) => g.to_vec(),
                None => vec![0.0; t.len()],
            };
            adam_update(
                &self.config,
                self.step_count,
                t.data_mut(),
                &grad,
                &mut self.first_moment[slot],
                &mut self.second_moment[slot],
            )?;
        }
        Ok(())
    }
}
