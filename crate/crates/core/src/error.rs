use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// The N×N measurement-domain covariance could not be factorized.
    #[error("ill-conditioned system: {0}")]
    IllConditioned(String),

    #[error("zero reference channel: NMSE is undefined")]
    ZeroChannel,

    #[error("exhaustive posterior limited to M <= {max} (got {got})")]
    TooLarge { got: usize, max: usize },
}

pub type Result<T> = std::result::Result<T, Error>;
