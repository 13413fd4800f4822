use alloc::format;
use alloc::vec::Vec;

use crate::autodiff::{Tape, Var};
use crate::error::Result;
use crate::rng::Rng;
use crate::tensor::{ParamGroup, ParamId, ParamStore, Tensor};

/// Fully connected layer `y = x·Wᵀ + b` with `W: [out, in]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub weight: ParamId,
    pub bias: ParamId,
    pub inputs: usize,
    pub outputs: usize,
}

impl Dense {
    /// Uniform `±1/√inputs` initialization for weights and biases.
    pub fn new(store: &mut ParamStore, name: &str, group: ParamGroup, inputs: usize, outputs: usize, rng: &mut Rng) -> Self {
        let bound = 1.0 / libm::sqrt(inputs.max(1) as f64);
        let w = Tensor::from_fn([outputs, inputs], |_| rng.uniform_range(-bound, bound));
        let b = Tensor::from_fn([outputs], |_| rng.uniform_range(-bound, bound));
        Dense {
            weight: store.add(format!("{name}.weight"), group, w),
            bias: store.add(format!("{name}.bias"), group, b),
            inputs,
            outputs,
        }
    }

    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, x: Var) -> Result<Var> {
        let w = tape.param(store, self.weight);
        let b = tape.param(store, self.bias);
        let h = tape.matmul_nt(x, w)?;
        tape.add_row(h, b)
    }
}

/// Dense stack with ReLU between layers and an identity output.
pub(crate) fn mlp_forward(layers: &[Dense], tape: &mut Tape, store: &ParamStore, x: Var) -> Result<Var> {
    let mut h = x;
    for (n, layer) in layers.iter().enumerate() {
        h = layer.forward(tape, store, h)?;
        if n + 1 < layers.len() {
            h = tape.relu(h);
        }
    }
    Ok(h)
}

pub(crate) fn build_mlp(
    store: &mut ParamStore,
    name: &str,
    group: ParamGroup,
    inputs: usize,
    hidden: &[usize],
    outputs: usize,
    rng: &mut Rng,
) -> Vec<Dense> {
    let mut sizes = Vec::with_capacity(hidden.len() + 2);
    sizes.push(inputs);
    sizes.extend_from_slice(hidden);
    sizes.push(outputs);
    sizes
        .windows(2)
        .enumerate()
        .map(|(n, w)| Dense::new(store, &format!("{name}.{n}"), group, w[0], w[1], rng))
        .collect()
}
