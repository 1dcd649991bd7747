use num_complex::Complex64;
use thiserror::Error;

#[derive(Debug, Clone, Error)]
pub enum Error {
    #[error("degenerate input: {0}")]
    DegenerateInput(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("singularity: {0}")]
    Singularity(String),
    #[error("precondition violated: {0}")]
    PreconditionViolation(String),
    #[error("accuracy target missed: {message} (best estimate {estimate}, error estimate {error:e})")]
    AccuracyFailure {
        message: String,
        estimate: Complex64,
        error: f64,
    },
    #[error("point outside the solution domain: {0}")]
    DomainError(String),
    #[error("packet reached the grid edge (edge mass {edge_mass:e})")]
    DomainOverrun { edge_mass: f64 },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
