use std::path::PathBuf;

use thiserror::Error;

/// Errors surfaced by the avatar pipeline.
#[derive(Debug, Error)]
pub enum Error {
    /// Caller passed inconsistent or out-of-range input.
    #[error("invalid input: {0}")]
    Input(String),

    #[error("configuration error: {0}")]
    Config(String),

    /// A dataset, template or checkpoint file could not be read or validated.
    #[error("failed to load {path}: {reason}")]
    Load { path: PathBuf, reason: String },

    /// An internal precondition between pipeline stages was violated.
    #[error("contract violation: {0}")]
    Contract(String),

    /// Optimization diverged (NaN loss, empty surfel set, ...).
    #[error("training aborted at iteration {iteration}: {reason}")]
    Training { iteration: usize, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn load(path: impl Into<PathBuf>, reason: impl ToString) -> Self {
        Error::Load {
            path: path.into(),
            reason: reason.to_string(),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
