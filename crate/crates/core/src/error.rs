use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix is not positive definite (pivot {pivot} at index {index})")]
    NotPositiveDefinite { index: usize, pivot: f64 },
    #[error("matrix is not Hermitian (max deviation {deviation:e})")]
    NotHermitian { deviation: f64 },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("conjugate-gradient breakdown at iteration {iteration}: p^H R p = {curvature:e}")]
    Breakdown { iteration: usize, curvature: f64 },
    #[error("unsupported QAM order Q = {0} (expected 1, 2 or 3)")]
    UnsupportedOrder(usize),
    #[error("entry {index} is not a constellation point")]
    NotAConstellationPoint { index: usize },
    #[error("invalid correlation coefficient {0}")]
    InvalidCorrelation(f64),
    #[error("block index {0} out of range")]
    IndexError(usize),
    #[error("search space of {0} candidates exceeds the exhaustive-search limit")]
    SearchSpaceTooLarge(u128),
    #[error("penalty denominator {value:e} for bit plane {plane} is not positive")]
    NonconvexDenominator { plane: usize, value: f64 },
    #[error("empty batch")]
    EmptyBatch,
    #[error("training diverged: non-finite loss at step {0}")]
    DivergenceDetected(usize),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("{context}: {source}")]
    Cell {
        context: String,
        #[source]
        source: Box<Error>,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Toml(#[from] toml::de::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn dims(msg: impl Into<String>) -> Error {
    Error::DimensionMismatch(msg.into())
}
