use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::tensor::Tensor;

use super::system::{SystemSpec, VarFactorSpec};

/// Per-factor mixing weights over time, `K × T`, piecewise linear between
/// knots with values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct WeightTrajectory {
    pub weights: Tensor,
}

impl WeightTrajectory {
    /// Knots every `spacing` steps (always including one at or past the last
    /// step) with `U(0, 1)` values per factor.
    pub fn random(n_k: usize, len: usize, spacing: usize, rng: &mut Rng) -> Result<Self> {
        if spacing == 0 {
            return Err(Error::invalid("knot spacing must be positive"));
        }
        let n_knots = len.saturating_sub(1) / spacing + 2;
        let mut weights = Tensor::zeros([n_k, len]);
        for k in 0..n_k {
            let knots: Vec<f64> = (0..n_knots).map(|_| rng.uniform()).collect();
            for t in 0..len {
                let seg = t / spacing;
                let frac = (t % spacing) as f64 / spacing as f64;
                weights.data_mut()[k * len + t] = knots[seg] + (knots[seg + 1] - knots[seg]) * frac;
            }
        }
        Ok(WeightTrajectory { weights })
    }

    /// Constant weights, one per factor.
    pub fn constant(values: &[f64], len: usize) -> Self {
        let weights = Tensor::from_fn([values.len(), len], |idx| values[idx / len.max(1)]);
        WeightTrajectory { weights }
    }

    pub fn n_k(&self) -> usize {
        self.weights.shape()[0]
    }

    pub fn len(&self) -> usize {
        self.weights.shape()[1]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn at(&self, k: usize, t: usize) -> f64 {
        self.weights.at2(k, t)
    }

    /// Index of the largest weight at step `t`; ties go to the lowest index.
    pub fn dominant(&self, t: usize) -> usize {
        let mut best = 0;
        for k in 1..self.n_k() {
            if self.at(k, t) > self.at(best, t) {
                best = k;
            }
        }
        best
    }
}

/// Runs one VAR factor from `init` for `burn_in` discarded steps and then
/// records `len` steps, returning an `n_c × len` tensor.
///
/// Node `i` at global step `s` receives
/// `Σ_{j,l} w[i,j,l]·act(x_j[s-l-1]) + amp_i·sin(f_i·s) + amp_i·u·g`
/// with `u ~ U(0,1)` and `g ~ N(μ_i, σ²_i)`.
pub fn simulate_factor(factor: &VarFactorSpec, len: usize, burn_in: usize, init: &[f64], rng: &mut Rng) -> Result<Tensor> {
    let n = factor.n_c();
    let lags = factor.lags();
    if init.len() != n {
        return Err(Error::shape("simulate_factor", &[n], &[init.len()]));
    }
    // history[l] holds the state l + 1 steps in the past
    let mut history: Vec<Vec<f64>> = vec![init.to_vec(); lags];
    let mut out = Tensor::zeros([n, len]);
    let stds: Vec<f64> = factor.innov_var.iter().map(|v| libm::sqrt(*v)).collect();
    for step in 0..burn_in + len {
        let mut next = vec![0.0; n];
        for (i, slot) in next.iter_mut().enumerate() {
            let mut acc = 0.0;
            for (l, past) in history.iter().enumerate() {
                for (j, value) in past.iter().enumerate() {
                    let w = factor.weight(i, j, l);
                    if w != 0.0 {
                        acc += w * factor.activation(i, j, l).apply(*value);
                    }
                }
            }
            acc += factor.amp[i] * libm::sin(factor.base_freq[i] * step as f64);
            let u = rng.uniform();
            let g = rng.gaussian(factor.innov_mu[i], stds[i])?;
            acc += factor.amp[i] * u * g;
            *slot = acc;
        }
        history.rotate_right(1);
        history[0] = next;
        if step >= burn_in {
            let t = step - burn_in;
            for i in 0..n {
                out.data_mut()[i * len + t] = history[0][i];
            }
        }
    }
    Ok(out)
}

/// Simulates every factor, mixes with `trajectory`, and adds observation
/// noise.
pub fn simulate_with_trajectory(spec: &SystemSpec, trajectory: &WeightTrajectory, rng: &mut Rng) -> Result<Tensor> {
    let len = trajectory.len();
    if trajectory.n_k() != spec.n_k() {
        return Err(Error::shape("simulate_with_trajectory", &[spec.n_k(), len], trajectory.weights.shape()));
    }
    let n = spec.n_c;
    let mut mixed = Tensor::zeros([n, len]);
    for (k, factor) in spec.factors.iter().enumerate() {
        let init: Vec<f64> = (0..n).map(|_| rng.uniform_range(-1.0, 1.0)).collect();
        let rec = simulate_factor(factor, len, spec.burn_in, &init, rng)?;
        for i in 0..n {
            for t in 0..len {
                mixed.data_mut()[i * len + t] += trajectory.at(k, t) * rec.at2(i, t);
            }
        }
    }
    if spec.mix_noise_std > 0.0 {
        for v in mixed.data_mut() {
            *v += rng.gaussian(0.0, spec.mix_noise_std)?;
        }
    }
    Ok(mixed)
}

/// Draws a random trajectory and a mixed recording of `len` steps.
pub fn simulate_recording(spec: &SystemSpec, len: usize, rng: &mut Rng) -> Result<(Tensor, WeightTrajectory)> {
    if len == 0 {
        return Err(Error::invalid("recording length must be at least 1"));
    }
    let trajectory = WeightTrajectory::random(spec.n_k(), len, spec.knot_spacing, rng)?;
    let x = simulate_with_trajectory(spec, &trajectory, rng)?;
    Ok((x, trajectory))
}
