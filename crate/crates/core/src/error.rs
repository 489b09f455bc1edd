use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),

    #[error("{what} index {index} outside [{lo}, {hi}]")]
    IndexOutOfRange {
        what: &'static str,
        index: i64,
        lo: i64,
        hi: i64,
    },

    #[error("singular geometry: {0}")]
    SingularGeometry(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: String, got: String },

    #[error("not identifiable: {0}")]
    NotIdentifiable(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
