use thiserror::Error;

/// Errors raised by model construction and linear-algebra validation.
#[derive(Error, Debug, Clone, PartialEq)]
pub enum CoreError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("tensor factor {index} has dim {got}, Hilbert space declares {expected}")]
    TensorFactorMismatch {
        index: usize,
        expected: usize,
        got: usize,
    },

    #[error("operator is not square: {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },

    #[error("operator flagged hermitian deviates from A^dag by {deviation:.3e} (tol {tol:.3e})")]
    NotHermitian { deviation: f64, tol: f64 },

    #[error("state has zero norm")]
    ZeroNorm,

    #[error("jump superoperator called with zero jump probability")]
    ZeroJumpProbability,

    #[error("density matrix invalid: {0}")]
    InvalidDensity(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("unknown drive: {0}")]
    UnknownDrive(String),

    #[error("formula domain violated: {0}")]
    DomainViolation(String),

    #[error("step size {dt} us exceeds stability bound {bound} us")]
    StepSize { dt: f64, bound: f64 },
}
