use std::path::PathBuf;

use thiserror::Error;

/// Errors raised anywhere in the forecasting engine.
#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{file}: row {row}: {message}")]
    Row {
        file: String,
        row: usize,
        message: String,
    },

    #[error("{file}: header mismatch: expected [{expected}], found [{found}]")]
    Schema {
        file: String,
        expected: String,
        found: String,
    },

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("invalid tournament spec: {0}")]
    Spec(String),

    #[error("unknown team `{0}`")]
    UnknownTeam(String),

    #[error("optimizer did not converge after {iterations} iterations (gradient max-norm {grad_norm:e})")]
    NonConvergence { iterations: usize, grad_norm: f64 },

    #[error("no payout share in (0, 1] for bookmaker `{bookmaker}`: implied probabilities sum to {sum_at_one} at delta = 1")]
    FairBook { bookmaker: String, sum_at_one: f64 },

    #[error("leakage: {0}")]
    Leakage(String),

    #[error("lasso coordinate descent did not converge at lambda = {lambda:e}")]
    LassoNonConvergence { lambda: f64 },

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn row(file: &str, row: usize, message: impl Into<String>) -> Self {
        Error::Row {
            file: file.to_string(),
            row,
            message: message.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
