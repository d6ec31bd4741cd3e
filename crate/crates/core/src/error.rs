use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument lies outside the mathematical domain of the operation
    /// (diagonal of a singular kernel, non-positive regularization, ...).
    #[error("domain error: {0}")]
    Domain(String),

    /// Parameters that are individually valid but do not make sense together.
    #[error("configuration error: {0}")]
    Config(String),

    #[error("unsupported configuration: {0}")]
    Unsupported(String),

    #[error("estimation error: {0}")]
    Estimation(String),

    #[error("integration error: {0}")]
    Integration(String),

    #[error("convergence error after {iterations} iterations (last residual {residual:e})")]
    Convergence {
        iterations: usize,
        residual: f64,
        history: Vec<f64>,
    },

    #[error("tuning error: {0}")]
    Tuning(String),

    #[error("cross-validation error: {0}")]
    CrossValidation(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Json(#[from] serde_json::Error),
}

pub(crate) fn config_err<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Config(msg.into()))
}

pub(crate) fn domain_err<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Domain(msg.into()))
}
