use thiserror::Error;

/// Errors produced by the simulator kernel.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("non-finite value at ({row}, {col})")]
    NonFinite { row: usize, col: usize },

    #[error("matrix is not square: {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("site index {site} out of range for {n_qubits} qubits")]
    SiteOutOfRange { site: usize, n_qubits: usize },

    #[error("invalid site selection: {0}")]
    InvalidSites(String),

    #[error("matrix is not Hermitian (max deviation {0:.3e})")]
    NotHermitian(f64),

    #[error("invalid state: {0}")]
    InvalidState(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("channel is not CPTP: {0}")]
    NotCptp(String),

    #[error("matrix is singular: {0}")]
    Singular(String),

    #[error("trace drift {drift:.3e} exceeds tolerance {tol:.3e}; reduce the step size")]
    TraceDrift { drift: f64, tol: f64 },

    #[error("integration unstable: population {value:.3e} outside [0, 1]; reduce the step size")]
    Unstable { value: f64 },

    #[error("Bell projection probability {0:.3e} too small to condition on")]
    Unconditioned(f64),

    #[error("I/O error: {0}")]
    Io(String),

    #[error("malformed file: {0}")]
    Format(String),

    #[error("fit failed: {0}")]
    FitFailed(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),
}

pub type Result<T> = std::result::Result<T, Error>;
