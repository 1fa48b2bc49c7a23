use thiserror::Error;

/// Errors raised by the separation toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("non-stationary AR(1) coefficient {0}: the magnitude must be below 1")]
    NonStationary(f64),

    #[error(
        "sample covariance is rank deficient (smallest/largest eigenvalue = {ratio:e}); \
         reduce the number of channels (e.g. by PCA) before separating"
    )]
    RankDeficient { ratio: f64 },

    #[error("matrix is singular")]
    Singular,

    #[error("row {0} of the matrix is zero")]
    ZeroRow(usize),

    #[error("channel {0} has zero variance")]
    ZeroVariance(usize),

    #[error("line {line}: {message}")]
    Parse { line: u64, message: String },

    #[error("no data rows")]
    NoData,

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
