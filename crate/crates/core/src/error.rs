use thiserror::Error;

/// Errors raised anywhere in the solver stack.
#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("grid mismatch: expected d={expected_d}, n={expected_n}, found d={found_d}, n={found_n}")]
    GridMismatch {
        expected_d: usize,
        expected_n: usize,
        found_d: usize,
        found_n: usize,
    },

    #[error("linear solver breakdown: {0}")]
    LinearBreakdown(String),

    #[error("linear solver did not converge after {iterations} iterations (relative residual {residual:e})")]
    LinearNotConverged { iterations: usize, residual: f64 },

    #[error("{0}")]
    StepFailure(Box<crate::newton::StepFailure>),

    #[error("invariant violation: {0}")]
    Invariant(String),

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Process exit status used by the command-line runner.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::GridMismatch { .. } => 2,
            Error::Domain(_) | Error::LinearBreakdown(_) | Error::LinearNotConverged { .. } | Error::StepFailure(_) => {
                3
            }
            Error::Invariant(_) => 4,
            Error::Io(_) => 5,
        }
    }
}
