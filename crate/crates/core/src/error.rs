use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A price row that could not be parsed. `line` is 1-based and counts the header.
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("line {line}: non-positive price {price} for {ticker} on {date}")]
    NonPositivePrice {
        line: usize,
        ticker: String,
        date: String,
        price: f64,
    },

    #[error("no rows: {0}")]
    Empty(String),

    #[error("index out of range: {0}")]
    OutOfRange(String),

    #[error("insufficient history: {0}")]
    InsufficientHistory(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("step called on a finished episode")]
    EpisodeDone,

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("baseline weights missing for period {0}")]
    MissingPeriod(i64),

    #[error("unknown strategy {0:?}")]
    UnknownStrategy(String),

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn dim(msg: impl Into<String>) -> Self {
        Error::Dimension(msg.into())
    }
}
