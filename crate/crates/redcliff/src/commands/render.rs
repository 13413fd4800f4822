use std::path::PathBuf;

use clap::Args;
use serde::Serialize;

use crate::binfmt;
use crate::commands::eval::write_svgs;
use crate::error::Result;
use crate::lock::DirLock;
use crate::report::read_eval_report;

#[derive(Debug, Clone, Args, Serialize)]
pub struct RenderArgs {
    /// report.json, or the directory holding it.
    #[arg(long)]
    pub report: PathBuf,
    /// Output directory; defaults to the report's directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Pure presentation: writes SVGs only, no manifest.
pub fn run(a: &RenderArgs) -> Result<Vec<String>> {
    let path = if a.report.is_dir() { a.report.join("report.json") } else { a.report.clone() };
    let report = read_eval_report(&path)?;
    let out = match &a.out {
        Some(o) => o.clone(),
        None => path.parent().map(|p| p.to_path_buf()).unwrap_or_default(),
    };
    binfmt::create_dir(&out)?;
    let _lock = DirLock::acquire(&out)?;
    write_svgs(&out, &report.heatmaps)
}
