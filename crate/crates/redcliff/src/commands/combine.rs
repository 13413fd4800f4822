use std::path::{Path, PathBuf};

use clap::Args;
use redcliff_core::synth::{combine_folds, Sample, WindowedDataset};
use serde::Serialize;

use crate::binfmt;
use crate::dataset::{export_dataset, import_dataset, CombineInfo, DatasetDir};
use crate::error::{AppError, Result};
use crate::lock::DirLock;
use crate::manifest::{ManifestBuilder, RunManifest};

#[derive(Debug, Clone, Args, Serialize)]
pub struct CombineArgs {
    /// Dataset directories, one per fold. All must share shapes and counts.
    #[arg(long, num_args = 2.., required = true)]
    pub inputs: Vec<PathBuf>,
    /// Only emit this dominant fold; by default every fold is dominant once.
    #[arg(long)]
    pub dominant: Option<usize>,
    #[arg(long, default_value_t = 10.0)]
    pub coeff_dominant: f64,
    #[arg(long, default_value_t = 1.0)]
    pub coeff_background: f64,
    #[arg(long)]
    pub out: PathBuf,
}

fn mix_split(parts: &[&WindowedDataset], dominant: usize, a: &CombineArgs) -> Result<WindowedDataset> {
    let dom = parts[dominant];
    let mut out = WindowedDataset::new(dom.n_c, dom.n_classes, dom.window_len, dom.split, dom.seed);
    for n in 0..dom.len() {
        let xs: Vec<_> = parts.iter().map(|p| p.samples[n].x.clone()).collect();
        let x = combine_folds(&xs, dominant, a.coeff_dominant, a.coeff_background)?;
        out.push(Sample {
            x,
            y: dom.samples[n].y.clone(),
        })?;
    }
    Ok(out)
}

fn check_compatible(paths: &[PathBuf], sets: &[DatasetDir]) -> Result<()> {
    let first = &sets[0].meta;
    for (p, d) in paths.iter().zip(sets) {
        let m = &d.meta;
        if (m.n_c, m.window_len, m.train_count, m.val_count) != (first.n_c, first.window_len, first.train_count, first.val_count) {
            return Err(AppError::validation(format!(
                "{}: shape (n_c {}, window {}, train {}, val {}) differs from {} (n_c {}, window {}, train {}, val {})",
                p.display(),
                m.n_c,
                m.window_len,
                m.train_count,
                m.val_count,
                paths[0].display(),
                first.n_c,
                first.window_len,
                first.train_count,
                first.val_count
            )));
        }
    }
    Ok(())
}

pub fn run(a: &CombineArgs) -> Result<RunManifest> {
    if a.inputs.len() < 2 {
        return Err(AppError::validation("combine needs at least two inputs"));
    }
    if let Some(d) = a.dominant {
        if d >= a.inputs.len() {
            return Err(AppError::validation(format!("--dominant {d} out of range for {} inputs", a.inputs.len())));
        }
    }
    binfmt::create_dir(&a.out)?;
    let _lock = DirLock::acquire(&a.out)?;
    let inputs: Vec<&Path> = a.inputs.iter().map(|p| p.as_path()).collect();
    let manifest = ManifestBuilder::start("combine", serde_json::to_value(a).expect("args serialize"), None, &inputs)?;
    let sets = a.inputs.iter().map(|p| import_dataset(p)).collect::<Result<Vec<_>>>()?;
    check_compatible(&a.inputs, &sets)?;
    let dominants: Vec<usize> = match a.dominant {
        Some(d) => vec![d],
        None => (0..sets.len()).collect(),
    };
    let mut outputs = Vec::new();
    for d in dominants {
        let train_parts: Vec<&WindowedDataset> = sets.iter().map(|s| &s.train).collect();
        let val_parts: Vec<&WindowedDataset> = sets.iter().map(|s| &s.val).collect();
        let mut meta = sets[d].meta.clone();
        meta.combined = Some(CombineInfo {
            sources: a.inputs.iter().map(|p| p.display().to_string()).collect(),
            dominant: d,
            dominant_coeff: a.coeff_dominant,
            background_coeff: a.coeff_background,
        });
        let combined = DatasetDir {
            meta,
            train: mix_split(&train_parts, d, a)?,
            val: mix_split(&val_parts, d, a)?,
            system: sets[d].system.clone(),
        };
        let name = format!("dominant_{d}");
        export_dataset(&a.out.join(&name), &combined)?;
        outputs.push(name);
    }
    manifest.finish(&a.out, outputs)
}
