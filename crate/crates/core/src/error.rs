use thiserror::Error;

/// Errors raised by the monitoring library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix is not positive definite: {0}")]
    NotPositiveDefinite(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("fixed-point iteration did not converge after {cycles} cycles (last relative change {change:.3e})")]
    NonConvergent { cycles: usize, change: f64 },

    #[error("covariance diverged (trace {trace:.3e} exceeds guard after {steps} steps)")]
    Divergent { trace: f64, steps: usize },

    #[error("invalid schedule: {0}")]
    InvalidSchedule(String),

    #[error("invalid scenario: {0}")]
    InvalidScenario(String),

    #[error("malformed problem: {0}")]
    MalformedProblem(String),

    #[error("no SDP backend is available (built without the `clarabel` feature)")]
    BackendUnavailable,

    #[error("SDP backend error: {0}")]
    Backend(String),

    #[error("expected an optimal solution, got {0}")]
    NotOptimal(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
