use alloc::vec::Vec;

use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::tensor::{ParamGroup, ParamId, ParamStore, Tensor};

use super::dense::{build_mlp, mlp_forward, Dense};

/// Smallest allowed magnitude of a head scale.
pub const MIN_HEAD_SCALE: f64 = 1e-3;

/// Elementwise affine map `v ↦ s ⊙ v + b`.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineHead {
    pub scale: ParamId,
    pub bias: ParamId,
    pub dim: usize,
}

impl AffineHead {
    fn new(store: &mut ParamStore, name: &str, dim: usize) -> Self {
        AffineHead {
            scale: store.add(alloc::format!("{name}.scale"), ParamGroup::State, Tensor::full([dim], 1.0)),
            bias: store.add(alloc::format!("{name}.bias"), ParamGroup::State, Tensor::zeros([dim])),
            dim,
        }
    }

    pub fn apply(&self, store: &ParamStore, v: &[f64]) -> Result<Vec<f64>> {
        affine_forward(store.get(self.scale).data(), store.get(self.bias).data(), v)
    }

    pub fn inverse(&self, store: &ParamStore, v: &[f64]) -> Result<Vec<f64>> {
        affine_inverse(store.get(self.scale).data(), store.get(self.bias).data(), v)
    }

    fn tape_forward(&self, tape: &mut Tape, store: &ParamStore, x: Var) -> Result<Var> {
        let s = tape.param(store, self.scale);
        let b = tape.param(store, self.bias);
        let h = tape.mul_row(x, s)?;
        tape.add_row(h, b)
    }

    /// Pushes every scale with `|s| < MIN_HEAD_SCALE` out to the floor,
    /// keeping its sign (zero goes positive).
    pub fn project(&self, store: &mut ParamStore) {
        for s in store.get_mut(self.scale).data_mut() {
            if s.abs() < MIN_HEAD_SCALE {
                *s = if *s < 0.0 { -MIN_HEAD_SCALE } else { MIN_HEAD_SCALE };
            }
        }
    }

    pub fn min_abs_scale(&self, store: &ParamStore) -> f64 {
        store.get(self.scale).data().iter().fold(f64::INFINITY, |m, s| m.min(s.abs()))
    }
}

pub fn affine_forward(scale: &[f64], bias: &[f64], v: &[f64]) -> Result<Vec<f64>> {
    if scale.len() != v.len() || bias.len() != v.len() {
        return Err(Error::shape("affine", &[scale.len()], &[v.len()]));
    }
    Ok(v.iter().zip(scale).zip(bias).map(|((x, s), b)| s * x + b).collect())
}

pub fn affine_inverse(scale: &[f64], bias: &[f64], v: &[f64]) -> Result<Vec<f64>> {
    if scale.len() != v.len() || bias.len() != v.len() {
        return Err(Error::shape("affine_inverse", &[scale.len()], &[v.len()]));
    }
    if scale.iter().any(|s| s.abs() < MIN_HEAD_SCALE) {
        return Err(Error::invalid("head scale below invertibility floor"));
    }
    Ok(v.iter().zip(scale).zip(bias).map(|((x, s), b)| (x - b) / s).collect())
}

/// Output of the state model for one batch.
#[derive(Debug, Clone, Copy)]
pub struct StateVars {
    pub alpha_prime: Var,
    pub alpha: Var,
    pub y_hat: Option<Var>,
}

/// Trunk `g'_h` over the flattened context window, followed by the
/// factor-weight head `g_α` and the label head `g_y` on the first `B`
/// trunk outputs.
#[derive(Debug, Clone, PartialEq)]
pub struct StateModel {
    pub n_c: usize,
    pub window: usize,
    pub n_k: usize,
    pub n_supervised: usize,
    pub trunk: Vec<Dense>,
    pub alpha_head: AffineHead,
    pub label_head: Option<AffineHead>,
    pub alpha_sigmoid: bool,
}

impl StateModel {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        store: &mut ParamStore,
        n_c: usize,
        window: usize,
        n_k: usize,
        n_supervised: usize,
        hidden: &[usize],
        alpha_sigmoid: bool,
        rng: &mut Rng,
    ) -> Result<Self> {
        if n_k == 0 || n_supervised > n_k {
            return Err(Error::invalid("state model needs 1 ≤ n_k and B ≤ n_k"));
        }
        let trunk = build_mlp(store, "state.trunk", ParamGroup::State, n_c * window, hidden, n_k, rng);
        let alpha_head = AffineHead::new(store, "state.alpha_head", n_k);
        let label_head = (n_supervised > 0).then(|| AffineHead::new(store, "state.label_head", n_supervised));
        Ok(StateModel {
            n_c,
            window,
            n_k,
            n_supervised,
            trunk,
            alpha_head,
            label_head,
            alpha_sigmoid,
        })
    }

    /// `flat: [N, n_c·window]` (channel-major) to `α: [N, n_k]` and `ŷ: [N, B]`.
    pub fn tape_forward(&self, tape: &mut Tape, store: &ParamStore, flat: Var) -> Result<StateVars> {
        let alpha_prime = mlp_forward(&self.trunk, tape, store, flat)?;
        let mut alpha = self.alpha_head.tape_forward(tape, store, alpha_prime)?;
        if self.alpha_sigmoid {
            alpha = tape.sigmoid(alpha);
        }
        let y_hat = match &self.label_head {
            Some(head) => {
                let lead = tape.col_slice(alpha_prime, 0, self.n_supervised)?;
                Some(head.tape_forward(tape, store, lead)?)
            }
            None => None,
        };
        Ok(StateVars { alpha_prime, alpha, y_hat })
    }

    /// Returns `(α, ŷ)` for one window `x: [n_c, window]`.
    pub fn forward(&self, store: &ParamStore, x: &Tensor) -> Result<(Vec<f64>, Vec<f64>)> {
        if x.shape() != [self.n_c, self.window] {
            return Err(Error::shape("state_forward", &[self.n_c, self.window], x.shape()));
        }
        let mut tape = Tape::new();
        let flat = tape.constant_raw([1, x.len()], x.data().to_vec())?;
        let vars = self.tape_forward(&mut tape, store, flat)?;
        let y = vars.y_hat.map(|v| tape.value(v).to_vec()).unwrap_or_default();
        Ok((tape.value(vars.alpha).to_vec(), y))
    }

    /// Raw trunk output `α'` for one window.
    pub fn trunk_forward(&self, store: &ParamStore, x: &Tensor) -> Result<Vec<f64>> {
        let mut tape = Tape::new();
        let flat = tape.constant_raw([1, x.len()], x.data().to_vec())?;
        let out = mlp_forward(&self.trunk, &mut tape, store, flat)?;
        Ok(tape.value(out).to_vec())
    }

    pub fn project_heads(&self, store: &mut ParamStore) {
        self.alpha_head.project(store);
        if let Some(h) = &self.label_head {
            h.project(store);
        }
    }
}

/// `state_forward` as a free function.
pub fn state_forward(s: &StateModel, store: &ParamStore, x: &Tensor) -> Result<(Vec<f64>, Vec<f64>)> {
    s.forward(store, x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::{prop_assert, proptest};

    #[test]
    fn affine_examples() {
        assert_eq!(affine_forward(&[1.0], &[0.0], &[0.3]).unwrap(), [0.3]);
        assert_eq!(affine_forward(&[2.0], &[1.0], &[0.5]).unwrap(), [2.0]);
        assert_eq!(affine_inverse(&[2.0], &[1.0], &[2.0]).unwrap(), [0.5]);
        assert!(affine_inverse(&[1e-4], &[0.0], &[1.0]).is_err());
        assert!(affine_forward(&[1.0, 1.0], &[0.0], &[1.0]).is_err());
    }

    #[test]
    fn identity_head_passes_trunk_through() {
        let mut store = ParamStore::new();
        let s = StateModel::new(&mut store, 2, 5, 3, 2, &[7], false, &mut Rng::new(1)).unwrap();
        let x = Tensor::from_fn([2, 5], |i| (i as f64 * 0.3).sin());
        let (alpha, y) = s.forward(&store, &x).unwrap();
        assert_eq!(alpha, s.trunk_forward(&store, &x).unwrap());
        assert_eq!(y.len(), 2);
        assert!(s.forward(&store, &Tensor::zeros([2, 4])).is_err());
    }

    #[test]
    fn label_head_consistent_with_inverted_alpha() {
        let mut rng = Rng::new(9);
        let mut store = ParamStore::new();
        let s = StateModel::new(&mut store, 3, 6, 4, 2, &[8], false, &mut rng).unwrap();
        for id in [s.alpha_head.scale, s.alpha_head.bias, s.label_head.as_ref().unwrap().scale] {
            store.get_mut(id).data_mut().iter_mut().for_each(|v| *v = rng.uniform_range(-2.0, 2.0));
        }
        s.project_heads(&mut store);
        let x = Tensor::from_fn([3, 6], |_| rng.uniform_range(-1.0, 1.0));
        let (alpha, y) = s.forward(&store, &x).unwrap();
        let back = s.alpha_head.inverse(&store, &alpha).unwrap();
        let via = s.label_head.as_ref().unwrap().apply(&store, &back[..2]).unwrap();
        for (a, b) in y.iter().zip(&via) {
            assert!((a - b).abs() <= 1e-9);
        }
    }

    #[test]
    fn projection_floors_scales() {
        let mut store = ParamStore::new();
        let s = StateModel::new(&mut store, 1, 2, 3, 1, &[2], false, &mut Rng::new(0)).unwrap();
        store.get_mut(s.alpha_head.scale).data_mut().copy_from_slice(&[0.0, -1e-5, 0.5]);
        s.project_heads(&mut store);
        assert_eq!(store.get(s.alpha_head.scale).data(), &[1e-3, -1e-3, 0.5]);
        assert!(s.alpha_head.min_abs_scale(&store) >= MIN_HEAD_SCALE);
    }

    #[test]
    fn supervised_count_cannot_exceed_factors() {
        let mut store = ParamStore::new();
        assert!(StateModel::new(&mut store, 2, 3, 2, 3, &[4], false, &mut Rng::new(0)).is_err());
    }

    proptest! {
        #[test]
        fn heads_invert(
            vals in proptest::collection::vec((-5.0f64..5.0, -5.0f64..5.0, -3.0f64..3.0), 1..8),
        ) {
            let v: Vec<f64> = vals.iter().map(|t| t.0).collect();
            let b: Vec<f64> = vals.iter().map(|t| t.1).collect();
            let s: Vec<f64> = vals
                .iter()
                .map(|t| if t.2.abs() < MIN_HEAD_SCALE { MIN_HEAD_SCALE } else { t.2 })
                .collect();
            let back = affine_inverse(&s, &b, &affine_forward(&s, &b, &v).unwrap()).unwrap();
            for (x, y) in back.iter().zip(&v) {
                prop_assert!((x - y).abs() <= 1e-9);
            }
        }
    }
}
