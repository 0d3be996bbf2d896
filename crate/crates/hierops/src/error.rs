use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    /// An argument violated a precondition (out-of-range site, level, ...).
    #[error("argument error: {0}")]
    Argument(String),

    /// Invalid configuration (bad distribution parameters, bandwidth <= 0, ...).
    #[error("configuration error: {0}")]
    Config(String),

    /// A numerical routine failed (eigensolver non-convergence, step underflow).
    #[error("numerical error: {0}")]
    Numerical(String),

    /// Not enough data for the requested statistic.
    #[error("statistics error: {0}")]
    Statistics(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn argument(msg: impl Into<String>) -> Self {
        Error::Argument(msg.into())
    }

    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub fn numerical(msg: impl Into<String>) -> Self {
        Error::Numerical(msg.into())
    }

    pub fn statistics(msg: impl Into<String>) -> Self {
        Error::Statistics(msg.into())
    }
}
