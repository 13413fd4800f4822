use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::tensor::Tensor;

use super::simulate::{simulate_recording, WeightTrajectory};
use super::system::SystemSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Split {
    Train,
    Val,
}

/// One labelled window: `x` is `n_c × window_len`, `y` is one-hot of length `B`.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub x: Tensor,
    pub y: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WindowedDataset {
    pub n_c: usize,
    pub n_classes: usize,
    pub window_len: usize,
    pub split: Split,
    pub seed: u64,
    pub samples: Vec<Sample>,
}

impl WindowedDataset {
    pub fn new(n_c: usize, n_classes: usize, window_len: usize, split: Split, seed: u64) -> Self {
        WindowedDataset {
            n_c,
            n_classes,
            window_len,
            split,
            seed,
            samples: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Appends a sample after checking its shape against the dataset.
    pub fn push(&mut self, sample: Sample) -> Result<()> {
        if sample.x.shape() != [self.n_c, self.window_len] {
            return Err(Error::shape("WindowedDataset::push", &[self.n_c, self.window_len], sample.x.shape()));
        }
        if sample.y.len() != self.n_classes {
            return Err(Error::shape("WindowedDataset::push", &[self.n_classes], &[sample.y.len()]));
        }
        self.samples.push(sample);
        Ok(())
    }

    /// Sample counts per class, using the argmax of each label.
    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.n_classes];
        for s in &self.samples {
            if let Some(c) = argmax(&s.y) {
                counts[c] += 1;
            }
        }
        counts
    }
}

fn argmax(v: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, x) in v.iter().enumerate() {
        match best {
            Some(b) if v[b] >= *x => {}
            _ => best = Some(i),
        }
    }
    best
}

fn one_hot(len: usize, hot: usize) -> Vec<f64> {
    let mut y = vec![0.0; len];
    y[hot] = 1.0;
    y
}

fn window(x: &Tensor, start: usize, len: usize) -> Tensor {
    let (n, total) = (x.shape()[0], x.shape()[1]);
    Tensor::from_fn([n, len], |idx| {
        let (i, t) = (idx / len, idx % len);
        x.data()[i * total + start + t]
    })
}

/// Cuts `x` into windows of `window_len` every `stride` steps and labels each
/// with the dominant trajectory weight at its final step.
pub fn label_windows(x: &Tensor, trajectory: &WeightTrajectory, window_len: usize, stride: usize) -> Result<WindowedDataset> {
    let (n, total) = (x.shape()[0], x.shape()[1]);
    if trajectory.len() != total {
        return Err(Error::shape("label_windows", &[trajectory.n_k(), total], trajectory.weights.shape()));
    }
    if window_len == 0 || window_len > total {
        return Err(Error::invalid("window length must be in 1..=T"));
    }
    if stride == 0 {
        return Err(Error::invalid("stride must be positive"));
    }
    let mut ds = WindowedDataset::new(n, trajectory.n_k(), window_len, Split::Train, 0);
    let mut start = 0;
    while start + window_len <= total {
        let label = trajectory.dominant(start + window_len - 1);
        ds.samples.push(Sample {
            x: window(x, start, window_len),
            y: one_hot(trajectory.n_k(), label),
        });
        start += stride;
    }
    Ok(ds)
}

/// Windows per simulated recording when filling class quotas.
const WINDOWS_PER_RECORDING: usize = 10;
const MAX_RECORDINGS: usize = 100_000;

fn fill_split(spec: &SystemSpec, per_class: usize, window_len: usize, split: Split, seed: u64, stream: u64) -> Result<WindowedDataset> {
    let n_k = spec.n_k();
    let mut rng = Rng::stream(seed, stream);
    let mut ds = WindowedDataset::new(spec.n_c, n_k, window_len, split, seed);
    let mut counts = vec![0usize; n_k];
    let mut recordings = 0;
    while counts.iter().any(|&c| c < per_class) {
        if recordings >= MAX_RECORDINGS {
            return Err(Error::invalid("could not fill every class quota"));
        }
        recordings += 1;
        let (x, traj) = simulate_recording(spec, window_len * WINDOWS_PER_RECORDING, &mut rng)?;
        for sample in label_windows(&x, &traj, window_len, window_len)?.samples {
            let class = argmax(&sample.y).expect("one-hot label");
            if counts[class] < per_class {
                counts[class] += 1;
                ds.samples.push(sample);
            }
        }
    }
    Ok(ds)
}

/// Simulates train and validation splits with `per_class_*` windows for
/// every factor label. The splits use disjoint random streams of `seed`.
pub fn generate_dataset(
    spec: &SystemSpec,
    per_class_train: usize,
    per_class_val: usize,
    window_len: usize,
    seed: u64,
) -> Result<(WindowedDataset, WindowedDataset)> {
    if window_len == 0 {
        return Err(Error::invalid("window length must be positive"));
    }
    let train = fill_split(spec, per_class_train, window_len, Split::Train, seed, 1)?;
    let val = fill_split(spec, per_class_val, window_len, Split::Val, seed, 2)?;
    Ok((train, val))
}

/// `dominant_coeff · r[dominant] + background_coeff · Σ_{k≠dominant} r[k]`.
pub fn combine_folds(recordings: &[Tensor], dominant: usize, dominant_coeff: f64, background_coeff: f64) -> Result<Tensor> {
    let first = recordings.first().ok_or(Error::EmptyDataset)?;
    if dominant >= recordings.len() {
        return Err(Error::invalid("dominant index out of range"));
    }
    for r in recordings {
        if r.shape() != first.shape() {
            return Err(Error::shape("combine_folds", first.shape(), r.shape()));
        }
    }
    let mut out = Tensor::zeros(first.shape().to_vec());
    for (k, r) in recordings.iter().enumerate() {
        let c = if k == dominant { dominant_coeff } else { background_coeff };
        for (o, v) in out.data_mut().iter_mut().zip(r.data()) {
            *o += c * v;
        }
    }
    Ok(out)
}
