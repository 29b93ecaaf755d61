use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("no interactions")]
    NoInteractions,

    #[error("invalid input: {0}")]
    Validation(String),

    #[error("format error: {0}")]
    Format(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error(
        "exact square root is limited to {limit} graph nodes (got {nodes}); use a Chebyshev transform mode"
    )]
    TooLargeForExact { nodes: usize, limit: usize },

    #[error("non-finite value at epoch {epoch}, batch {batch}, example {example}: {what}")]
    NonFinite {
        epoch: usize,
        batch: usize,
        example: usize,
        what: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
