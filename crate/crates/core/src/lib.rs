//! Conditionally weighted factor models for hypothesizing dynamic
//! (state-dependent) Granger-causal graphs in multivariate time series.
//!
//! The crate is `no_std` and only needs `alloc`. It contains:
//!
//! - [`tensor`], [`autodiff`], [`optim`], [`rng`], [`ops`]: a small
//!   deterministic numerics core with reverse-mode gradients and Adam.
//! - [`synth`]: ground-truth switching VAR systems, simulation, window
//!   labelling, complexity rating and multi-fold combination.
//! - [`model`]: per-factor cMLP forecasters, the state model with
//!   invertible heads, the composite forward pass and every loss term.
//! - [`training`]: the three-phase schedule, the validation stopping
//!   criterion and ablation handling.
//! - [`eval`]: graph standardization and scoring metrics.
//!
//! File formats, reports and the command line live in the `redcliff`
//! companion crate.

#![no_std]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod autodiff;
pub mod error;
pub mod eval;
pub mod model;
pub mod ops;
pub mod optim;
pub mod rng;
pub mod synth;
pub mod tensor;
pub mod training;

pub use error::{Error, Result};
pub use tensor::{ParamGroup, ParamId, ParamStore, Tensor};
