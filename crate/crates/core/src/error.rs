use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("region `{0}` not found in case table")]
    RegionNotFound(String),

    #[error("malformed row {row}: column `{column}` has non-numeric value `{value}`")]
    MalformedRow {
        row: usize,
        column: String,
        value: String,
    },

    #[error("dates are not contiguous: {prev} is followed by {next}")]
    NonContiguousDates {
        prev: chrono::NaiveDate,
        next: chrono::NaiveDate,
    },

    #[error("series has {len} values, at least {min} required")]
    SeriesTooShort { len: usize, min: usize },

    #[error("series covers {available} days from the requested start, {needed} needed")]
    InsufficientDateRange { needed: usize, available: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("history is empty")]
    EmptyHistory,

    #[error("population is required when the population cap is active")]
    MissingPopulation,

    #[error("state dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("state contains non-finite values")]
    NonFiniteState,

    #[error("need at least {min_chains} chains of {min_draws} draws, got {chains} x {draws}")]
    TooFewDraws {
        chains: usize,
        draws: usize,
        min_chains: usize,
        min_draws: usize,
    },

    #[error("window carries no information (all incidence zero)")]
    DegenerateWindow,

    #[error("horizon mismatch: ensemble has {ensemble} days, observation has {observed}")]
    HorizonMismatch { ensemble: usize, observed: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }
}
