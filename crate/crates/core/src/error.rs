use thiserror::Error;

/// Errors raised across the simulator.
#[derive(Debug, Error)]
pub enum ThpError {
    #[error("dimension error: {0}")]
    Dimension(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("structure mismatch: operation needs {expected}, variable uses {actual}")]
    StructureMismatch { expected: String, actual: String },

    #[error("ill-conditioned RZF inversion (residual {residual:.3e})")]
    IllConditioned { residual: f64 },

    #[error("dual solver: {0}")]
    Solver(String),

    #[error("run aborted after {0} consecutive skipped steps")]
    Aborted(usize),

    #[error("bad channel dump: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, ThpError>;

pub(crate) fn dim_err<T>(msg: impl Into<String>) -> Result<T> {
    Err(ThpError::Dimension(msg.into()))
}
