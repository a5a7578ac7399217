use thiserror::Error;

/// Errors raised by the simulator.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("invalid dimensions: {0}")]
    InvalidDimensions(String),

    #[error("zero state: {0} is undefined for the zero vector")]
    ZeroState(&'static str),

    #[error("matrix is not Hermitian (max deviation {deviation:.3e})")]
    NotHermitian { deviation: f64 },

    #[error("not a valid density matrix: {0}")]
    InvalidDensityMatrix(String),

    #[error("not a projector: {0}")]
    InvalidProjector(String),

    #[error("basis is not orthonormal (max deviation {deviation:.3e})")]
    NotOrthonormal { deviation: f64 },

    #[error("eigendecomposition failed: {0}")]
    Eigendecomposition(String),

    #[error("time {time} is outside the schedule range [0, {horizon}]")]
    TimeOutOfRange { time: f64, horizon: f64 },

    #[error("invalid schedule: {0}")]
    InvalidSchedule(String),

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("numerical failure in {operation}: {detail}")]
    Numerical {
        operation: &'static str,
        detail: String,
    },
}

pub type Result<T> = std::result::Result<T, Error>;
