use alloc::string::String;

/// Errors raised by the numerical kernel.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("index {index} out of range 1..={max}")]
    IndexOutOfRange { index: usize, max: usize },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("degenerate frame: wedge volume vanishes")]
    DegenerateFrame,
    #[error("singular matrix")]
    Singular,
    #[error("degenerate sample: {0}")]
    DegenerateSample(String),
    #[error("sequence is not Cauchy (residual {residual:.3e})")]
    NotCauchy { residual: f64 },
    #[error("measure is not stationary: {0}")]
    NotStationary(String),
    #[error("insufficient data: {0}")]
    Insufficient(String),
    #[error("invalid cocycle system: {0}")]
    InvalidSystem(String),
}

pub type Result<T> = core::result::Result<T, Error>;
