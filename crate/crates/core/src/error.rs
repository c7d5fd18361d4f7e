use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    Dimension {
        context: &'static str,
        expected: String,
        actual: String,
    },

    #[error("{what} violates its contract: residual {residual:.3e} exceeds {tolerance:.1e}")]
    Contract {
        what: &'static str,
        residual: f64,
        tolerance: f64,
    },

    #[error("covariance {0} is not positive definite")]
    NotPositiveDefinite(&'static str),

    #[error("numerical inconsistency in {context}: {detail}")]
    Numerical { context: &'static str, detail: String },

    #[error("estimation is ill-posed: {0}")]
    IllPosed(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("scenario requires an eavesdropper but none is configured")]
    MissingEve,

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn dim(context: &'static str, expected: impl ToString, actual: impl ToString) -> Self {
        Error::Dimension {
            context,
            expected: expected.to_string(),
            actual: actual.to_string(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
