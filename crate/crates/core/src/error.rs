use std::io;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("environment generation failed after {attempts} attempts: {reason}")]
    Generation { attempts: usize, reason: String },

    #[error("episode already finished; reset or regenerate the environment")]
    EpisodeFinished,

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("unsupported expansion: {0}")]
    UnsupportedExpansion(String),

    #[error("state-count cap of {cap} exceeded during exhaustive search")]
    StateCapExceeded { cap: usize },

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("empty episode range")]
    EmptyRange,

    #[error("malformed dataset: {0}")]
    Dataset(String),

    #[error("seed {seed}: {source}")]
    Worker {
        seed: u64,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for errors caused by bad user input rather than a runtime failure.
    pub fn is_config_error(&self) -> bool {
        match self {
            Error::InvalidConfig(_)
            | Error::Json(_)
            | Error::UnsupportedExpansion(_)
            | Error::EmptyRange => true,
            Error::Worker { source, .. } => source.is_config_error(),
            _ => false,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
