use thiserror::Error;

/// Errors raised by the lifespan library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("x = {x} lies outside the support of the model")]
    OutOfSupport { x: f64 },

    #[error("truncation interval ({lower}, {upper}] has zero probability under the model")]
    DegenerateInterval { lower: f64, upper: f64 },

    #[error("record {index}: truncation set has zero probability under the model")]
    DegenerateSupport { index: usize },

    #[error("row {row}: {msg}")]
    Parse { row: usize, msg: String },

    #[error("row {row}: record violates the sampling frame: {msg}")]
    FrameViolation { row: usize, msg: String },

    #[error("estimator undefined: {0}")]
    Undefined(String),

    #[error("no exceedances above threshold {0}")]
    EmptyExceedances(f64),

    #[error("optimizer did not converge after {iterations} iterations (best loglik {loglik})")]
    NonConvergence {
        iterations: usize,
        loglik: f64,
        best: Vec<f64>,
    },

    #[error("profile likelihood is not unimodal; local maxima near {0:?}")]
    NonUnimodal(Vec<f64>),

    #[error("{failed} of {total} replicates failed")]
    TooManyFailures { failed: usize, total: usize },

    #[error("infeasible alternative: {0}")]
    Infeasible(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Coarse classification used for process exit codes and C status codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Usage,
    Data,
    Numerical,
    Io,
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::InvalidParameter(_) | Error::InvalidConfig(_) => ErrorKind::Usage,
            Error::Parse { .. }
            | Error::FrameViolation { .. }
            | Error::EmptyExceedances(_)
            | Error::Undefined(_)
            | Error::Csv(_)
            | Error::Json(_) => ErrorKind::Data,
            Error::Io(_) => ErrorKind::Io,
            Error::OutOfSupport { .. }
            | Error::DegenerateInterval { .. }
            | Error::DegenerateSupport { .. }
            | Error::NonConvergence { .. }
            | Error::NonUnimodal(_)
            | Error::TooManyFailures { .. }
            | Error::Infeasible(_) => ErrorKind::Numerical,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
