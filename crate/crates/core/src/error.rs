use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("value {value} outside the support of {what}")]
    OutsideSupport { what: String, value: f64 },

    #[error("weibull shape root not bracketed in [{lo}, {hi}] for coefficient of variation {cv}")]
    WeibullShape { cv: f64, lo: f64, hi: f64 },

    #[error("correlation matrix is not positive definite")]
    NotPositiveDefinite,

    #[error("covariance matrix not positive definite after jitter escalation to {jitter:e}")]
    Cholesky { jitter: f64 },

    #[error("trend matrix is rank deficient ({q} basis functions, {n} points)")]
    RankDeficientTrend { q: usize, n: usize },

    #[error("transformed trend requires an input model")]
    MissingInputModel,

    #[error("domain error in benchmark #{id}: {reason}")]
    Domain { id: u8, reason: String },

    #[error("unknown token `{0}`")]
    UnknownToken(String),

    #[error("every restart failed: {0}")]
    AllRestartsFailed(String),

    #[error("validation outputs have zero variance")]
    ZeroVariance,

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
