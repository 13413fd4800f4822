use std::path::{Path, PathBuf};

pub type Result<T, E = AppError> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum AppError {
    #[error("invalid input: {0}")]
    Validation(String),
    #[error("training diverged: {0}")]
    Diverged(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{0}: checksum mismatch (file truncated or corrupt)")]
    Checksum(PathBuf),
    #[error("{path}: unsupported format version {found} (expected {expected})")]
    UnsupportedVersion { path: PathBuf, found: u32, expected: u32 },
    #[error("{path}: {msg}")]
    Format { path: PathBuf, msg: String },
    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("{0} is locked by another command (remove the lock file if stale)")]
    Locked(PathBuf),
}

impl AppError {
    /// Process exit status for this error.
    pub fn exit_code(&self) -> i32 {
        match self {
            AppError::Validation(_) => 2,
            AppError::Diverged(_) => 3,
            _ => 1,
        }
    }

    pub fn io(path: impl AsRef<Path>) -> impl FnOnce(std::io::Error) -> AppError {
        let path = path.as_ref().to_path_buf();
        move |source| AppError::Io { path, source }
    }

    pub fn json(path: impl AsRef<Path>) -> impl FnOnce(serde_json::Error) -> AppError {
        let path = path.as_ref().to_path_buf();
        move |source| AppError::Json { path, source }
    }

    pub fn format(path: impl AsRef<Path>, msg: impl Into<String>) -> AppError {
        AppError::Format {
            path: path.as_ref().to_path_buf(),
            msg: msg.into(),
        }
    }

    pub fn validation(msg: impl Into<String>) -> AppError {
        AppError::Validation(msg.into())
    }
}

impl From<redcliff_core::Error> for AppError {
    fn from(e: redcliff_core::Error) -> Self {
        match e {
            redcliff_core::Error::Diverged { .. } => AppError::Diverged(e.to_string()),
            other => AppError::Validation(other.to_string()),
        }
    }
}
