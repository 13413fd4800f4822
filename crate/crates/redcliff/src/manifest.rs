use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::binfmt::write_json;
use crate::error::{AppError, Result};

pub const MANIFEST_NAME: &str = "manifest.json";

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct InputHash {
    pub path: String,
    pub sha256: String,
}

/// Provenance record written once per artifact-producing command.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct RunManifest {
    pub command: String,
    pub config: serde_json::Value,
    pub seed: Option<u64>,
    pub inputs: Vec<InputHash>,
    pub outputs: Vec<String>,
    pub tool_version: String,
    pub started_unix: f64,
    pub wall_clock_secs: f64,
}

/// SHA-256 of a file, or of every file under a directory in sorted
/// relative-path order (lock and manifest files skipped).
pub fn hash_path(path: &Path) -> Result<String> {
    let mut hasher = Sha256::new();
    if path.is_dir() {
        let mut files = Vec::new();
        collect_files(path, path, &mut files)?;
        files.sort();
        for rel in files {
            let bytes = std::fs::read(path.join(&rel)).map_err(AppError::io(path.join(&rel)))?;
            hasher.update(rel.to_string_lossy().as_bytes());
            hasher.update([0u8]);
            hasher.update(Sha256::digest(&bytes));
        }
    } else {
        let bytes = std::fs::read(path).map_err(AppError::io(path))?;
        hasher.update(&bytes);
    }
    Ok(hex::encode(hasher.finalize()))
}

fn collect_files(root: &Path, dir: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    for entry in std::fs::read_dir(dir).map_err(AppError::io(dir))? {
        let entry = entry.map_err(AppError::io(dir))?;
        let p = entry.path();
        let name = entry.file_name();
        if name == crate::lock::LOCK_NAME || name == MANIFEST_NAME {
            continue;
        }
        if p.is_dir() {
            collect_files(root, &p, out)?;
        } else {
            out.push(p.strip_prefix(root).expect("under root").to_path_buf());
        }
    }
    Ok(())
}

/// Collects inputs up front, then finalizes with outputs and timing.
pub struct ManifestBuilder {
    manifest: RunManifest,
    clock: Instant,
}

impl ManifestBuilder {
    pub fn start(command: &str, config: serde_json::Value, seed: Option<u64>, inputs: &[&Path]) -> Result<Self> {
        let started_unix = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs_f64()).unwrap_or(0.0);
        let inputs = inputs
            .iter()
            .map(|p| {
                Ok(InputHash {
                    path: p.display().to_string(),
                    sha256: hash_path(p)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(ManifestBuilder {
            manifest: RunManifest {
                command: command.to_string(),
                config,
                seed,
                inputs,
                outputs: Vec::new(),
                tool_version: env!("CARGO_PKG_VERSION").to_string(),
                started_unix,
                wall_clock_secs: 0.0,
            },
            clock: Instant::now(),
        })
    }

    pub fn finish(mut self, dir: &Path, outputs: Vec<String>) -> Result<RunManifest> {
        self.manifest.outputs = outputs;
        self.manifest.wall_clock_secs = self.clock.elapsed().as_secs_f64();
        write_json(&dir.join(MANIFEST_NAME), &self.manifest)?;
        Ok(self.manifest)
    }
}
