use std::path::PathBuf;

/// Errors raised anywhere in the simulator, optimizer, or runner.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Parameters or shapes that can never be valid for the requested operation.
    #[error("configuration error: {0}")]
    Config(String),

    /// A call made in the wrong order or with arguments outside the contract.
    #[error("usage error: {0}")]
    Usage(String),

    /// A NaN or infinity showed up where only finite values are allowed.
    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("search space of {cardinality} tuples exceeds the budget of {budget}")]
    BudgetExceeded { cardinality: u128, budget: u128 },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: line {line}, column {column}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        column: usize,
        message: String,
    },

    #[error("checkpoint format: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, err: &serde_json::Error) -> Self {
        Error::Parse {
            path: path.into(),
            line: err.line(),
            column: err.column(),
            message: err.to_string(),
        }
    }
}
