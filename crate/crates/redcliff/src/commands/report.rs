use std::path::{Path, PathBuf};

use clap::Args;
use serde::Serialize;

use crate::binfmt;
use crate::error::{AppError, Result};
use crate::lock::DirLock;
use crate::manifest::ManifestBuilder;
use crate::report::{read_eval_report, summarize, write_summary, SummaryReport};

#[derive(Debug, Clone, Args, Serialize)]
pub struct ReportArgs {
    /// Evaluation directories (or their parents, one level deep).
    #[arg(long, num_args = 1.., required = true)]
    pub runs: Vec<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    /// Method that pairwise improvements are measured against.
    #[arg(long)]
    pub reference: Option<String>,
}

fn find_reports(root: &Path) -> Result<Vec<PathBuf>> {
    let direct = root.join("report.json");
    if direct.is_file() {
        return Ok(vec![direct]);
    }
    let mut found = Vec::new();
    let entries = std::fs::read_dir(root).map_err(AppError::io(root))?;
    for e in entries {
        let p = e.map_err(AppError::io(root))?.path().join("report.json");
        if p.is_file() {
            found.push(p);
        }
    }
    found.sort();
    if found.is_empty() {
        return Err(AppError::validation(format!("no report.json under {}", root.display())));
    }
    Ok(found)
}

pub fn run(a: &ReportArgs) -> Result<SummaryReport> {
    let mut paths = Vec::new();
    for r in &a.runs {
        paths.extend(find_reports(r)?);
    }
    binfmt::create_dir(&a.out)?;
    let _lock = DirLock::acquire(&a.out)?;
    let inputs: Vec<&Path> = paths.iter().map(|p| p.as_path()).collect();
    let manifest = ManifestBuilder::start("report", serde_json::to_value(a).expect("args serialize"), None, &inputs)?;
    let mut rows = Vec::new();
    for p in &paths {
        rows.extend(read_eval_report(p)?.rows);
    }
    // fixed order regardless of how runs were listed
    rows.sort_by(|x, y| (&x.system, &x.method, x.repeat, x.factor).cmp(&(&y.system, &y.method, y.repeat, y.factor)));
    let summary = summarize(rows, a.reference.as_deref())?;
    let outputs = write_summary(&a.out, &summary)?;
    manifest.finish(&a.out, outputs)?;
    Ok(summary)
}
