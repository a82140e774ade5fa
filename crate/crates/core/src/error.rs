use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("dimension mismatch: expected {expected}, got {actual} ({context})")]
    DimensionMismatch {
        expected: usize,
        actual: usize,
        context: &'static str,
    },

    #[error("component index {index} out of range for {count} components")]
    IndexOutOfRange { index: usize, count: usize },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("point is infeasible (violation {violation:e})")]
    Infeasible { violation: f64 },

    #[error("power iteration did not converge after {iterations} iterations (best estimate {estimate})")]
    PowerIteration { iterations: usize, estimate: f64 },

    #[error("diverged at iteration {iteration}: {reason}")]
    Diverged {
        iteration: u64,
        reason: String,
        last_finite: Vec<f64>,
    },

    #[error("invariant violated: {0}")]
    Invariant(String),

    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("solver `{0}` is already registered")]
    DuplicateSolver(String),

    #[error("unknown solver `{name}` (registered: {})", .known.join(", "))]
    UnknownSolver { name: String, known: Vec<String> },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}
