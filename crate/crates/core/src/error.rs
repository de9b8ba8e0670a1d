use thiserror::Error;

/// Errors produced by the simulators, estimators and harness.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// Elastic resolution requested for bodies that are not approaching.
    #[error(
        "no approach: tracer velocity {v_tracer} does not exceed neutral velocity {v_neutral}"
    )]
    NoApproach { v_tracer: f64, v_neutral: f64 },

    #[error("insufficient data: need at least {needed} samples, got {got}")]
    InsufficientData { needed: usize, got: usize },

    /// The event loop produced a chronologically impossible state.
    #[error("internal consistency violation: {message}\n{dump}")]
    Consistency { message: String, dump: String },

    #[error("config error at `{path}`: {message}")]
    Config { path: String, message: String },

    #[error("worker failure on trajectory {index}: {source}")]
    Worker {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn ensure_finite(name: &str, value: f64) -> Result<()> {
    if value.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!(
            "{name} must be finite, got {value}"
        )))
    }
}
