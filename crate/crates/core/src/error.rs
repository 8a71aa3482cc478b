use thiserror::Error;

/// Errors raised by the indexer pipeline.
#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum IndexerError {
    #[error("invalid dimension {name}: {reason}")]
    InvalidDims { name: &'static str, reason: String },

    #[error("{tensor} has {actual} elements, expected {expected}")]
    LengthMismatch {
        tensor: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("{tensor} contains a non-finite value at flat offset {offset}")]
    NonFiniteInput { tensor: &'static str, offset: usize },

    #[error("non-finite score at batch {batch}, query {query}, block {block}")]
    NonFiniteScore {
        batch: usize,
        query: usize,
        block: usize,
    },

    #[error("byte count overflows u64: {0}")]
    ByteOverflow(&'static str),

    #[error("tile [{start}, {start}+{len}) out of range for axis {axis} of extent {extent}")]
    TileOutOfRange {
        axis: &'static str,
        start: usize,
        len: usize,
        extent: usize,
    },

    #[error("duplicate block index {0}")]
    DuplicateIndex(i64),

    #[error("inputs were built for a different problem shape")]
    ShapeMismatch,

    #[error("result shapes differ: {0}")]
    ResultShapeMismatch(String),

    #[error("row (batch {batch}, query {query}) holds {actual} valid entries, expected {expected}")]
    EffectiveTopK {
        batch: usize,
        query: usize,
        expected: usize,
        actual: usize,
    },
}

pub type Result<T, E = IndexerError> = std::result::Result<T, E>;
