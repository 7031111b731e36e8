//! End-to-end experiment orchestration: config, per-station forecasting,
//! kernel caches, reports and the self-check suite.

use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::cache::CacheError;
use crate::gram::GramError;
use crate::krr::KrrError;
use crate::metrics::MetricsError;
use crate::mixopt::MixError;
use crate::pipeline::PipelineError;

pub mod config;
pub mod kernels;
pub mod report;
pub mod run;
pub mod verify;

pub use config::ExperimentConfig;

/// Environment variable overriding the kernel cache directory.
pub const CACHE_DIR_ENV: &str = "QFTK_CACHE_DIR";

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
    #[error(transparent)]
    Gram(#[from] GramError),
    #[error(transparent)]
    Mix(#[from] MixError),
    #[error(transparent)]
    Krr(#[from] KrrError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Cache(#[from] CacheError),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("station `{0}` is not in the config")]
    UnknownStation(String),
    #[error("no station reports found under {0}")]
    NoReportsFound(PathBuf),
    #[error("all {0} stations failed")]
    AllStationsFailed(usize),
}

impl ExperimentError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        Self::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    /// Process exit code: 2 for configuration problems, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            ExperimentError::Config(_) => 2,
            _ => 1,
        }
    }
}

pub(crate) fn write_file(path: &Path, bytes: &[u8]) -> Result<(), ExperimentError> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| ExperimentError::io(dir, e))?;
    }
    std::fs::write(path, bytes).map_err(|e| ExperimentError::io(path, e))
}

pub(crate) fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<(), ExperimentError> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    write_file(path, &bytes)
}
