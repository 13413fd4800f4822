//! File formats, run directories, reports and the command line for
//! `redcliff-core`.

pub mod binfmt;
pub mod checkpoint;
pub mod commands;
pub mod config;
pub mod dataset;
pub mod error;
pub mod lock;
pub mod manifest;
pub mod report;
pub mod svg;
pub mod threads;

pub use error::{AppError, Result};
