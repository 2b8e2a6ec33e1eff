use std::path::Path;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error ({path}): {message}")]
    Config { path: String, message: String },
    #[error("tuning infeasible:\n{0}")]
    Infeasible(String),
    #[error("validation failed: {failed} of {total} checks violated the contract")]
    Validation { failed: usize, total: usize },
    #[error("run '{name}' diverged at t = {time:.6} s (last stable time {last_stable_time:.6} s)")]
    Divergence {
        name: String,
        time: f64,
        last_stable_time: f64,
    },
    #[error("{0}")]
    Failed(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl CliError {
    pub fn config(path: &Path, message: impl Into<String>) -> Self {
        Self::Config {
            path: path.display().to_string(),
            message: message.into(),
        }
    }

    /// Process exit status for this error.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config { .. } => 2,
            Self::Infeasible(_) => 3,
            Self::Validation { .. } => 4,
            Self::Divergence { .. } => 5,
            _ => 1,
        }
    }
}
