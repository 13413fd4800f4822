use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::synth::WindowedDataset;
use crate::tensor::Tensor;

/// Reference to one training example: forecast position `position` of
/// dataset sample `sample`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Example {
    pub sample: usize,
    pub position: usize,
}

/// Every forecast position `p` in `context..window_len` stepping by `stride`
/// for every sample.
pub fn enumerate_examples(ds: &WindowedDataset, context: usize, stride: usize) -> Result<Vec<Example>> {
    if stride == 0 {
        return Err(Error::invalid("position stride must be positive"));
    }
    if context >= ds.window_len {
        return Err(Error::invalid("context window must be shorter than the sample window"));
    }
    let mut out = Vec::new();
    for sample in 0..ds.len() {
        let mut p = context;
        while p < ds.window_len {
            out.push(Example { sample, position: p });
            p += stride;
        }
    }
    Ok(out)
}

/// Pre-flattened inputs for a batch of `N` examples.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    /// `[N, n_c·τ_in]`, lag features for the factors.
    pub factor_features: Tensor,
    /// `[N, n_c·(τ_in+τ_cl)]`, channel-major context for the state model.
    pub state_input: Tensor,
    /// `[N, n_c]` next-step values.
    pub targets: Tensor,
    /// `[N, B_data]` labels.
    pub labels: Tensor,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.targets.shape()[0]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Builds a batch directly from context windows `[n_c, τ_in+τ_cl]`,
    /// their next-step targets and labels.
    pub fn from_windows(windows: &[(Tensor, Vec<f64>, Vec<f64>)], tau_in: usize) -> Result<Self> {
        let first = windows.first().ok_or(Error::EmptyDataset)?;
        let (n_c, len) = match first.0.shape() {
            [a, b] => (*a, *b),
            s => return Err(Error::shape("Batch::from_windows", &[0, 0], s)),
        };
        let n_lab = first.2.len();
        let mut feats = Vec::with_capacity(windows.len() * n_c * tau_in);
        let mut state = Vec::with_capacity(windows.len() * n_c * len);
        let mut targets = Vec::with_capacity(windows.len() * n_c);
        let mut labels = Vec::with_capacity(windows.len() * n_lab);
        for (x, t, y) in windows {
            if x.shape() != [n_c, len] || t.len() != n_c || y.len() != n_lab {
                return Err(Error::shape("Batch::from_windows", &[n_c, len], x.shape()));
            }
            feats.extend(super::factor::lag_features(x, tau_in)?);
            state.extend_from_slice(x.data());
            targets.extend_from_slice(t);
            labels.extend_from_slice(y);
        }
        let n = windows.len();
        Ok(Batch {
            factor_features: Tensor::new([n, n_c * tau_in], feats)?,
            state_input: Tensor::new([n, n_c * len], state)?,
            targets: Tensor::new([n, n_c], targets)?,
            labels: Tensor::new([n, n_lab], labels)?,
        })
    }

    /// Gathers `examples` of `ds` with a context of `tau_in + tau_cl` steps.
    pub fn gather(ds: &WindowedDataset, examples: &[Example], tau_in: usize, tau_cl: usize) -> Result<Self> {
        if examples.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let ctx = tau_in + tau_cl;
        let (n_c, w) = (ds.n_c, ds.window_len);
        let n = examples.len();
        let mut feats = Vec::with_capacity(n * n_c * tau_in);
        let mut state = Vec::with_capacity(n * n_c * ctx);
        let mut targets = Vec::with_capacity(n * n_c);
        let mut labels = Vec::with_capacity(n * ds.n_classes);
        for ex in examples {
            let s = ds.samples.get(ex.sample).ok_or(Error::invalid("example sample out of range"))?;
            if ex.position < ctx || ex.position >= w {
                return Err(Error::invalid("example position out of range"));
            }
            let d = s.x.data();
            for j in 0..n_c {
                for lag in 1..=tau_in {
                    feats.push(d[j * w + ex.position - lag]);
                }
            }
            for j in 0..n_c {
                state.extend_from_slice(&d[j * w + ex.position - ctx..j * w + ex.position]);
            }
            for j in 0..n_c {
                targets.push(d[j * w + ex.position]);
            }
            labels.extend_from_slice(&s.y);
        }
        Ok(Batch {
            factor_features: Tensor::new([n, n_c * tau_in], feats)?,
            state_input: Tensor::new([n, n_c * ctx], state)?,
            targets: Tensor::new([n, n_c], targets)?,
            labels: Tensor::new([n, ds.n_classes], labels)?,
        })
    }
}
