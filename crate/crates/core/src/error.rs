use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A matrix that must be inverted is numerically singular even after the ridge.
    #[error("ill-conditioned matrix: reciprocal condition number {rcond:e} below {threshold:e}")]
    Conditioning { rcond: f64, threshold: f64 },

    #[error("value outside domain: {0}")]
    Domain(String),

    #[error("insufficient samples: need more than {needed}, got {got}")]
    InsufficientSamples { needed: usize, got: usize },

    #[error("numerical failure: {0}")]
    Numerical(String),

    /// Effective mass of a mixture component fell under the floor.
    #[error("component {component} is empty: mass {mass} below floor {floor}")]
    EmptyCluster { component: usize, mass: f64, floor: f64 },

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("series too short: need at least {needed} rows, got {got}")]
    TooShort { needed: usize, got: usize },

    #[error("degenerate data: {0}")]
    DegenerateData(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }
}
