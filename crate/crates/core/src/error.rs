use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("empty input")]
    EmptyInput,

    #[error("index {index} out of range for length {len}")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("cannot select {m} patches from {patches}")]
    SelectionOutOfRange { m: usize, patches: usize },

    #[error("bad magic: expected {expected:?}, found {found:?}")]
    BadMagic { expected: [u8; 4], found: [u8; 4] },

    #[error("unsupported format version {0}")]
    UnsupportedVersion(u16),

    #[error("file truncated")]
    TruncatedFile,

    #[error("{0} trailing bytes after the last section")]
    TrailingData(usize),

    #[error("non-finite value in {0}")]
    NonFiniteValue(&'static str),

    #[error("invalid store: {0}")]
    InvalidStore(String),

    #[error("infeasible synthetic config: {0}")]
    InfeasibleConfig(String),

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("episode needs {needed} classes but the store has {available}")]
    InsufficientClasses { needed: usize, available: usize },

    #[error("episode needs {needed} records per class for {needed_classes} classes, only {eligible} classes qualify")]
    InsufficientRecords {
        needed: usize,
        needed_classes: usize,
        eligible: usize,
    },

    #[error("non-finite gradient")]
    NonFiniteGradient,

    #[error("head expects input of {expected} but the configuration gives {found}")]
    ShapeMismatch { expected: usize, found: usize },

    #[error("unknown record id {0}")]
    UnknownRecord(u64),

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for errors caused by the filesystem or a malformed file, as
    /// opposed to a bad configuration or argument.
    pub fn is_io_or_format(&self) -> bool {
        matches!(
            self,
            Error::BadMagic { .. }
                | Error::UnsupportedVersion(_)
                | Error::TruncatedFile
                | Error::TrailingData(_)
                | Error::NonFiniteValue(_)
                | Error::InvalidStore(_)
                | Error::Io(_)
                | Error::Json(_)
        )
    }
}
