use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::tensor::{ParamGroup, ParamStore, Tensor};

use super::dense::{build_mlp, mlp_forward, Dense};

/// Lagged adjacency `Â[i, j, ℓ-1]`: strength of channel `j` at lag `ℓ`
/// on output node `i`.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct LaggedAdjacency {
    pub values: Tensor,
}

impl LaggedAdjacency {
    pub fn new(values: Tensor) -> Result<Self> {
        if values.shape().len() != 3 || values.shape()[0] != values.shape()[1] {
            return Err(Error::shape("LaggedAdjacency", &[0, 0, 0], values.shape()));
        }
        Ok(LaggedAdjacency { values })
    }

    pub fn n_c(&self) -> usize {
        self.values.shape()[0]
    }

    pub fn lags(&self) -> usize {
        self.values.shape()[2]
    }
}

/// `Ã[i, j] = Σ_ℓ Â[i, j, ℓ]`.
pub fn lag_sum(a: &LaggedAdjacency) -> Tensor {
    let (n, l) = (a.n_c(), a.lags());
    let d = a.values.data();
    Tensor::from_fn([n, n], |idx| d[idx * l..(idx + 1) * l].iter().sum())
}

/// Component-wise MLP: one small network per output channel, all reading
/// the same `n_c × τ_in` lag window.
///
/// The first layer of node `i` is `[H, n_c·τ_in]`; input feature
/// `j·τ_in + (ℓ-1)` holds channel `j` at lag `ℓ`.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorNet {
    pub n_c: usize,
    pub tau_in: usize,
    pub hidden: Vec<usize>,
    pub nodes: Vec<Vec<Dense>>,
}

impl FactorNet {
    pub fn new(store: &mut ParamStore, name: &str, n_c: usize, tau_in: usize, hidden: &[usize], rng: &mut Rng) -> Result<Self> {
        if n_c == 0 || tau_in == 0 {
            return Err(Error::invalid("factor needs n_c ≥ 1 and τ_in ≥ 1"));
        }
        if hidden.is_empty() || hidden.contains(&0) {
            return Err(Error::invalid("factor needs at least one nonempty hidden layer"));
        }
        let nodes = (0..n_c)
            .map(|i| build_mlp(store, &format!("{name}.node{i}"), ParamGroup::Factor, n_c * tau_in, hidden, 1, rng))
            .collect();
        Ok(FactorNet {
            n_c,
            tau_in,
            hidden: hidden.to_vec(),
            nodes,
        })
    }

    pub fn input_len(&self) -> usize {
        self.n_c * self.tau_in
    }

    /// Forecast for a batch of lag features `[N, n_c·τ_in]`, giving `[N, n_c]`.
    pub fn tape_forward(&self, tape: &mut Tape, store: &ParamStore, features: Var) -> Result<Var> {
        let outs = self
            .nodes
            .iter()
            .map(|layers| mlp_forward(layers, tape, store, features))
            .collect::<Result<Vec<_>>>()?;
        tape.concat_cols(&outs)
    }

    /// One-step forecast from a window `x: [n_c, τ_in]` ordered oldest to newest.
    pub fn forward(&self, store: &ParamStore, x: &Tensor) -> Result<Tensor> {
        if x.shape() != [self.n_c, self.tau_in] {
            return Err(Error::shape("factor_forward", &[self.n_c, self.tau_in], x.shape()));
        }
        let feats = lag_features(x, self.tau_in)?;
        let mut tape = Tape::new();
        let f = tape.constant_raw([1, feats.len()], feats)?;
        let out = self.tape_forward(&mut tape, store, f)?;
        Tensor::new([self.n_c, 1], tape.value(out).to_vec())
    }

    /// Row `i` of `Â` as a differentiable `[n_c·τ_in]` vector of column norms.
    pub fn tape_adjacency_row(&self, tape: &mut Tape, store: &ParamStore, node: usize) -> Var {
        let w = tape.param(store, self.nodes[node][0].weight);
        tape.col_norms(w)
    }

    pub fn adjacency(&self, store: &ParamStore) -> LaggedAdjacency {
        let (n, l) = (self.n_c, self.tau_in);
        let mut values = vec![0.0; n * n * l];
        for (i, layers) in self.nodes.iter().enumerate() {
            let w = store.get(layers[0].weight);
            let cols = n * l;
            let h = w.shape()[0];
            for c in 0..cols {
                let ss: f64 = (0..h).map(|r| w.data()[r * cols + c] * w.data()[r * cols + c]).sum();
                values[i * cols + c] = libm::sqrt(ss);
            }
        }
        LaggedAdjacency {
            values: Tensor::new([n, n, l], values).expect("adjacency shape"),
        }
    }
}

/// Flattens the trailing `tau_in` steps of `x: [n_c, L]` into lag features.
pub fn lag_features(x: &Tensor, tau_in: usize) -> Result<Vec<f64>> {
    let (n, len) = match x.shape() {
        [n, len] => (*n, *len),
        s => return Err(Error::shape("lag_features", &[0, tau_in], s)),
    };
    if len < tau_in {
        return Err(Error::shape("lag_features", &[n, tau_in], x.shape()));
    }
    let mut out = vec![0.0; n * tau_in];
    for j in 0..n {
        for lag in 1..=tau_in {
            out[j * tau_in + lag - 1] = x.at2(j, len - lag);
        }
    }
    Ok(out)
}

/// `extract_adjacency` as a free function.
pub fn extract_adjacency(f: &FactorNet, store: &ParamStore) -> LaggedAdjacency {
    f.adjacency(store)
}

/// `factor_forward` as a free function.
pub fn factor_forward(f: &FactorNet, store: &ParamStore, x: &Tensor) -> Result<Tensor> {
    f.forward(store, x)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single(n_c: usize, tau: usize, hidden: &[usize]) -> (ParamStore, FactorNet) {
        let mut store = ParamStore::new();
        let f = FactorNet::new(&mut store, "f", n_c, tau, hidden, &mut Rng::new(3)).unwrap();
        (store, f)
    }

    #[test]
    fn zero_net_forecasts_zero() {
        let (mut store, f) = single(3, 2, &[4]);
        store.load_flat(&vec![0.0; store.total_len()]).unwrap();
        let x = Tensor::from_fn([3, 2], |i| i as f64 + 1.0);
        let y = f.forward(&store, &x).unwrap();
        assert_eq!(y.shape(), &[3, 1]);
        assert!(y.data().iter().all(|v| *v == 0.0));
        assert!(f.adjacency(&store).values.data().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn hand_set_linear_toy() {
        // n_c = 2, τ_in = 1, H = 1; weights chosen so the ReLU stays active.
        let (mut store, f) = single(2, 1, &[1]);
        let set = |store: &mut ParamStore, id, vals: &[f64]| store.get_mut(id).data_mut().copy_from_slice(vals);
        set(&mut store, f.nodes[0][0].weight, &[0.5, 2.0]);
        set(&mut store, f.nodes[0][0].bias, &[1.0]);
        set(&mut store, f.nodes[0][1].weight, &[3.0]);
        set(&mut store, f.nodes[0][1].bias, &[-1.0]);
        set(&mut store, f.nodes[1][0].weight, &[-1.0, 0.0]);
        set(&mut store, f.nodes[1][0].bias, &[0.0]);
        set(&mut store, f.nodes[1][1].weight, &[1.0]);
        set(&mut store, f.nodes[1][1].bias, &[0.25]);
        let x = Tensor::new([2, 1], vec![2.0, 1.0]).unwrap();
        let y = f.forward(&store, &x).unwrap();
        // node 0: relu(0.5·2 + 2·1 + 1) = 4 → 3·4 − 1 = 11
        // node 1: relu(−2) = 0 → 0.25
        assert_eq!(y.data(), &[11.0, 0.25]);
    }

    #[test]
    fn single_weight_gives_abs_entry() {
        let (mut store, f) = single(2, 3, &[5]);
        let w = f.nodes[0][0].weight;
        store.get_mut(w).data_mut().iter_mut().for_each(|v| *v = 0.0);
        // channel 1, lag 1 → feature 1·3 + 0
        store.get_mut(w).data_mut()[2 * 6 + 3] = -0.7;
        let a = f.adjacency(&store);
        assert_eq!(a.values.at3(0, 1, 0), 0.7);
        assert_eq!(a.values.data().iter().filter(|v| **v != 0.0).count(), 1 + 2 * 3);
    }

    #[test]
    fn adjacency_matches_loop_oracle_and_ignores_deep_layers() {
        let (mut store, f) = single(3, 4, &[6, 5]);
        let a = f.adjacency(&store);
        for i in 0..3 {
            let w = store.get(f.nodes[i][0].weight);
            for j in 0..3 {
                for lag in 0..4 {
                    let mut ss = 0.0;
                    for h in 0..6 {
                        let v = w.at2(h, j * 4 + lag);
                        ss += v * v;
                    }
                    assert!((a.values.at3(i, j, lag) - ss.sqrt()).abs() <= 1e-12);
                    assert!(a.values.at3(i, j, lag) >= 0.0);
                }
            }
        }
        for layers in &f.nodes {
            for layer in &layers[1..] {
                store.get_mut(layer.weight).data_mut().iter_mut().for_each(|v| *v += 1.5);
            }
        }
        assert_eq!(f.adjacency(&store), a);
    }

    #[test]
    fn lag_sum_examples() {
        let t = Tensor::from_fn([2, 2, 1], |i| i as f64);
        let a = LaggedAdjacency::new(t.clone()).unwrap();
        assert_eq!(lag_sum(&a).data(), t.data());
        let m = [1.0, 2.0, 3.0, 4.0];
        let twice = LaggedAdjacency::new(Tensor::from_fn([2, 2, 2], |i| m[i / 2])).unwrap();
        assert_eq!(lag_sum(&twice).data(), &[2.0, 4.0, 6.0, 8.0]);
        let mut rng = Rng::new(5);
        let r = LaggedAdjacency::new(Tensor::from_fn([3, 3, 4], |_| rng.uniform())).unwrap();
        let s = lag_sum(&r);
        for i in 0..3 {
            for j in 0..3 {
                let mut acc = 0.0;
                for l in 0..4 {
                    acc += r.values.at3(i, j, l);
                }
                assert_eq!(s.at2(i, j), acc);
            }
        }
    }

    #[test]
    fn wrong_input_shape_is_error() {
        let (store, f) = single(2, 2, &[3]);
        assert!(f.forward(&store, &Tensor::zeros([2, 3])).is_err());
        assert!(f.forward(&store, &Tensor::zeros([3, 2])).is_err());
    }

    #[test]
    fn lag_features_put_newest_first() {
        let x = Tensor::new([2, 3], vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        assert_eq!(lag_features(&x, 2).unwrap(), vec![3.0, 2.0, 6.0, 5.0]);
    }
}
