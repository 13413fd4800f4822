//! Seeded random source.
//!
//! Draws come from ChaCha8, a counter-based stream cipher generator whose
//! output depends only on `(seed, stream, word position)`. The same seed
//! therefore yields the same sequence on every platform. Independent
//! sub-streams are derived with [`Rng::stream`] instead of reseeding.
//!
//! Gaussian draws use Box–Muller on `libm`, so they do not depend on which
//! float backend the rest of the build happens to enable.

use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::{Rng as _, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone)]
pub struct Rng {
    seed: u64,
    inner: ChaCha8Rng,
}

impl Rng {
    pub fn new(seed: u64) -> Self {
        Self::stream(seed, 0)
    }

    /// Generator for sub-stream `stream` of `seed`.
    pub fn stream(seed: u64, stream: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(stream);
        Rng { seed, inner }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.random::<u64>()
    }

    /// Uniform draw in `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.inner.random::<f64>()
    }

    pub fn uniform_range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    pub fn gaussian(&mut self, mean: f64, std: f64) -> Result<f64> {
        check_std(std)?;
        Ok(mean + std * self.standard_normal())
    }

    /// One Box–Muller draw; the paired sine sample is discarded so every
    /// call consumes exactly two uniforms.
    fn standard_normal(&mut self) -> f64 {
        let u1 = 1.0 - self.uniform();
        let u2 = self.uniform();
        libm::sqrt(-2.0 * libm::log(u1)) * libm::cos(core::f64::consts::TAU * u2)
    }

    /// Uniform index in `0..n`.
    pub fn index(&mut self, n: usize) -> usize {
        self.inner.random_range(0..n)
    }

    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        items.shuffle(&mut self.inner);
    }

    /// `k` distinct indices from `0..n`, in draw order.
    pub fn sample_distinct(&mut self, n: usize, k: usize) -> Vec<usize> {
        let mut all: Vec<usize> = (0..n).collect();
        all.shuffle(&mut self.inner);
        all.truncate(k);
        all
    }
}

fn check_std(std: f64) -> Result<()> {
    if !(std >= 0.0 && std.is_finite()) {
        return Err(Error::invalid("standard deviation must be finite and non-negative"));
    }
    Ok(())
}

/// Tensor of `U(0, 1)` draws.
pub fn draw_uniform(rng: &mut Rng, shape: &[usize]) -> Tensor {
    Tensor::from_fn(shape.to_vec(), |_| rng.uniform())
}

/// Tensor of `N(mean, std²)` draws.
pub fn draw_gaussian(rng: &mut Rng, mean: f64, std: f64, shape: &[usize]) -> Result<Tensor> {
    check_std(std)?;
    Ok(Tensor::from_fn(shape.to_vec(), |_| mean + std * rng.standard_normal()))
}
