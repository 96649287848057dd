use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid network parameters: {0}")]
    InvalidParams(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid configuration: {0}")]
    ConfigInvalid(String),

    /// The ADMM iteration cap was hit without meeting the stopping rule.
    /// This is a heuristic declaration, not a certificate.
    #[error("declared infeasible after {iterations} iterations (residual {residual:.3e})")]
    Infeasible { iterations: usize, residual: f64 },

    #[error("oracle: {0}")]
    Oracle(String),

    #[error("serialization: {0}")]
    Serialization(String),

    #[error("io: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Serialization(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Serialization(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
