use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("dataset too small: need at least {needed} objects, have {have}")]
    DatasetTooSmall { needed: usize, have: usize },

    #[error("page of {page_size} bytes cannot hold a single {what}")]
    PageTooSmall {
        page_size: usize,
        what: &'static str,
    },

    #[error("bulk-build input is not sorted at position {position}")]
    Unsorted { position: usize },

    #[error("object id {0} already exists")]
    DuplicateId(u64),

    #[error("unknown or deleted object id {0}")]
    UnknownId(u64),

    #[error("descriptor {0} has no owning image")]
    UnmappedDescriptor(u64),

    #[error("value overflow in record {record}: {value} does not fit the integer range")]
    Overflow { record: u64, value: f64 },

    #[error("malformed input: {0}")]
    Format(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("storage error: {0}")]
    Storage(#[from] io::Error),
}

impl Error {
    pub(crate) fn format(msg: impl Into<String>) -> Self {
        Error::Format(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }
}
