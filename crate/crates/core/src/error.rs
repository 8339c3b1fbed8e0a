use std::io;

use thiserror::Error;

use crate::model::ItemId;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid vector: {0}")]
    InvalidVector(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("unknown item id {0}")]
    UnknownItem(ItemId),

    #[error("duplicate item id {0}")]
    DuplicateItem(ItemId),

    #[error("item {0} is already in the offer set")]
    AlreadySelected(ItemId),

    #[error("no revenue configured for item {0}")]
    MissingRevenue(ItemId),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("malformed input: {0}")]
    Malformed(String),

    #[error("unsupported format version: {0}")]
    Version(String),

    /// A size guard refused to run an exact computation.
    #[error("guard violation: {what} ({value} exceeds limit {limit})")]
    Guard { what: &'static str, value: f64, limit: f64 },

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }

    pub(crate) fn malformed(msg: impl Into<String>) -> Self {
        Error::Malformed(msg.into())
    }
}
