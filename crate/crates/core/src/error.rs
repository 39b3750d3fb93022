use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("invalid operator: {0}")]
    InvalidOperator(String),

    #[error("atom at {position} lies outside the open interval ({a}, {b})")]
    AtomOutsideDomain { position: f64, a: f64, b: f64 },

    #[error("negative measure where a nonnegative one is required: {0}")]
    NegativeMeasure(String),

    #[error("invalid nonlinearity: {0}")]
    InvalidNonlinearity(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("no convergence after {iterations} iterations (residual {residual:e}): {context}")]
    NonConvergence {
        context: String,
        iterations: usize,
        residual: f64,
    },

    #[error("penalty continuation stalled after {steps} steps (last increment {increment:e}): {context}")]
    ContinuationStalled {
        context: String,
        steps: usize,
        increment: f64,
    },

    #[error("singular linear system: {0}")]
    Singular(String),

    #[error("invalid Monte Carlo configuration: {0}")]
    InvalidMcConfig(String),
}

pub(crate) fn check_len(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::LengthMismatch { expected, got })
    }
}
