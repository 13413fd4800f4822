//! Ground-truth multi-state systems and labelled synthetic recordings.
//!
//! A system is a set of lagged VAR factors, each with its own sparse
//! inter-variable graph. Each factor is simulated independently; the
//! recordings are then mixed with piecewise-linear weights and observation
//! noise. Window labels mark which factor weight dominates.

mod dataset;
mod simulate;
mod system;

pub use dataset::{combine_folds, generate_dataset, label_windows, Sample, Split, WindowedDataset};
pub use simulate::{simulate_factor, simulate_recording, simulate_with_trajectory, WeightTrajectory};
pub use system::{
    build_system, build_system_with, complexity_rating, lag_collapsed_bound, Complexity, EdgeActivation,
    SystemOptions, SystemSpec, VarFactorSpec,
};
