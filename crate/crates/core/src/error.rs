use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("point ({x}, {y}) lies outside the region [-{half}, {half}]^2")]
    OutOfDomain { x: f64, y: f64, half: f64 },

    /// Cholesky pivot fell below the singularity threshold. `index` is the
    /// row that failed; `nearest` is the earlier row whose input location is
    /// closest to it, which is usually the duplicate responsible.
    #[error("covariance matrix is singular at row {index} (nearest earlier row: {nearest:?}, pivot^2 = {pivot_sq:e})")]
    Singular {
        index: usize,
        nearest: Option<usize>,
        pivot_sq: f64,
    },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("{path}:{line}: {msg}")]
    Parse {
        path: String,
        line: usize,
        msg: String,
    },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{context}: {source}")]
    Json {
        context: String,
        #[source]
        source: serde_json::Error,
    },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Short machine-readable tag used in error records.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::OutOfDomain { .. } => "out_of_domain",
            Error::Singular { .. } => "singular",
            Error::InvalidParameter(_) => "invalid_parameter",
            Error::EmptyInput(_) => "empty_input",
            Error::Parse { .. } => "parse",
            Error::Io { .. } => "io",
            Error::Json { .. } => "json",
        }
    }
}
