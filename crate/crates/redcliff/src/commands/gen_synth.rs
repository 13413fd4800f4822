use std::path::PathBuf;

use clap::Args;
use redcliff_core::rng::Rng;
use redcliff_core::synth::{build_system_with, complexity_rating, generate_dataset, SystemOptions};
use serde::Serialize;

use crate::dataset::{export_dataset, ComplexityInfo, DatasetDir, DatasetMeta, DATASET_VERSION};
use crate::error::{AppError, Result};
use crate::lock::DirLock;
use crate::manifest::{ManifestBuilder, RunManifest};
use crate::threads::{max_threads, par_map};
use crate::binfmt;

#[derive(Debug, Clone, Args, Serialize)]
pub struct GenSynthArgs {
    /// Number of channels.
    #[arg(long)]
    pub n_c: usize,
    /// Off-diagonal edges per factor.
    #[arg(long)]
    pub n_e: usize,
    /// Number of factors (states).
    #[arg(long)]
    pub n_k: usize,
    #[arg(long, default_value_t = 5)]
    pub repeats: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 1040)]
    pub train_per_class: usize,
    #[arg(long, default_value_t = 240)]
    pub val_per_class: usize,
    /// Window length in time steps.
    #[arg(long, default_value_t = 100)]
    pub window: usize,
    #[arg(long, default_value_t = 2)]
    pub lags: usize,
    #[arg(long, default_value_t = 0.1)]
    pub mix_noise_std: f64,
    #[arg(long, default_value_t = 50)]
    pub burn_in: usize,
    #[arg(long, default_value_t = 100)]
    pub knot_spacing: usize,
    #[arg(long, default_value_t = 1.0)]
    pub amp: f64,
    #[arg(long, default_value_t = 0.0)]
    pub innov_mu: f64,
    #[arg(long, default_value_t = 0.0)]
    pub innov_var: f64,
    #[arg(long, default_value_t = 0.1)]
    pub min_edge_magnitude: f64,
    #[arg(long, default_value_t = 0.95)]
    pub spectral_bound: f64,
}

impl GenSynthArgs {
    /// Library defaults for everything but the required fields.
    pub fn new(n_c: usize, n_e: usize, n_k: usize, out: impl Into<PathBuf>) -> Self {
        let o = SystemOptions::default();
        GenSynthArgs {
            n_c,
            n_e,
            n_k,
            repeats: 5,
            seed: 0,
            out: out.into(),
            train_per_class: 1040,
            val_per_class: 240,
            window: 100,
            lags: o.lags,
            mix_noise_std: o.mix_noise_std,
            burn_in: o.burn_in,
            knot_spacing: o.knot_spacing,
            amp: o.amp,
            innov_mu: o.innov_mu,
            innov_var: o.innov_var,
            min_edge_magnitude: o.min_edge_magnitude,
            spectral_bound: o.spectral_bound,
        }
    }

    pub fn options(&self) -> SystemOptions {
        SystemOptions {
            lags: self.lags,
            mix_noise_std: self.mix_noise_std,
            burn_in: self.burn_in,
            knot_spacing: self.knot_spacing,
            amp: self.amp,
            innov_mu: self.innov_mu,
            innov_var: self.innov_var,
            min_edge_magnitude: self.min_edge_magnitude,
            spectral_bound: self.spectral_bound,
        }
    }
}

/// Seeds for repeat `r`: (system, data).
pub fn repeat_seeds(seed: u64, r: usize) -> (u64, u64) {
    let mut rng = Rng::stream(seed, 100 + r as u64);
    (rng.next_u64(), rng.next_u64())
}

fn build_repeat(a: &GenSynthArgs, r: usize) -> Result<DatasetDir> {
    let opts = a.options();
    let (system_seed, data_seed) = repeat_seeds(a.seed, r);
    let system = build_system_with(a.n_c, a.n_e, a.n_k, system_seed, &opts)?;
    let (train, val) = generate_dataset(&system, a.train_per_class, a.val_per_class, a.window, data_seed)?;
    // zero edges has no defined rating; everything else must rate
    let complexity = match complexity_rating(a.n_c, a.n_e) {
        Ok((value, category)) => Some(ComplexityInfo { value, category }),
        Err(_) if a.n_e == 0 => None,
        Err(e) => return Err(e.into()),
    };
    let meta = DatasetMeta {
        format_version: DATASET_VERSION,
        n_c: a.n_c,
        n_classes: train.n_classes,
        window_len: a.window,
        train_count: train.len(),
        val_count: val.len(),
        train_class_counts: train.class_counts(),
        val_class_counts: val.class_counts(),
        seed: data_seed,
        system_seed,
        repeat: r,
        system: format!("{}-{}-{}", a.n_c, a.n_e, a.n_k),
        n_e: a.n_e,
        n_k: a.n_k,
        complexity,
        generator: opts,
        combined: None,
    };
    Ok(DatasetDir {
        meta,
        train,
        val,
        system: Some(system),
    })
}

pub fn run(a: &GenSynthArgs) -> Result<RunManifest> {
    if a.repeats == 0 {
        return Err(AppError::validation("--repeats must be at least 1"));
    }
    if a.train_per_class == 0 || a.val_per_class == 0 {
        return Err(AppError::validation("per-class window counts must be positive"));
    }
    binfmt::create_dir(&a.out)?;
    let _lock = DirLock::acquire(&a.out)?;
    let config = serde_json::to_value(a).expect("args serialize");
    let manifest = ManifestBuilder::start("gen-synth", config, Some(a.seed), &[])?;
    let repeats: Vec<usize> = (0..a.repeats).collect();
    let results = par_map(&repeats, max_threads(), |&r| -> Result<String> {
        let data = build_repeat(a, r)?;
        let name = format!("repeat_{r}");
        export_dataset(&a.out.join(&name), &data)?;
        Ok(name)
    });
    let outputs = results.into_iter().collect::<Result<Vec<_>>>()?;
    manifest.finish(&a.out, outputs)
}
