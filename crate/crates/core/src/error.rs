//! Error type shared across the crate.

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

/// Everything that can go wrong while building models or sampling.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("design matrix is rank deficient: {0}")]
    RankDeficient(String),

    #[error("matrix is not positive definite: {0}")]
    NotPositiveDefinite(String),

    #[error("non-finite value encountered: {0}")]
    NonFinite(String),

    #[error("invalid hyperparameter: {0}")]
    InvalidHyperparameter(String),

    #[error("singular covariance: {0}")]
    SingularCovariance(String),

    #[error("covariance family mismatch: {0}")]
    FamilyMismatch(String),

    #[error("invalid basis rank: {0}")]
    InvalidRank(String),

    #[error("requested rank too large: {0}")]
    RankTooLarge(String),

    #[error("degenerate operator: {0}")]
    DegenerateOperator(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("insufficient draws: {0}")]
    InsufficientDraws(String),

    #[error("calibration failed: {0}")]
    Calibration(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}
