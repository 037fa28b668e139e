use std::path::PathBuf;

/// Errors raised across the crate.
///
/// Variants are grouped by class; [`Error::class`] maps each onto the
/// coarse categories the command-line tool turns into exit codes.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("shape error: {0}")]
    Shape(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("metric undefined: {0}")]
    UndefinedMetric(String),

    #[error(transparent)]
    Format(#[from] FormatError),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// Coarse error category.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Config,
    Data,
    Shape,
    Io,
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Config(_) => ErrorClass::Config,
            Error::Shape(_) => ErrorClass::Shape,
            Error::Data(_) | Error::UndefinedMetric(_) | Error::Format(_) => ErrorClass::Data,
            Error::Io { .. } => ErrorClass::Io,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

/// Parse failures for the binary container formats (`WEMB`, `WCHK`).
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum FormatError {
    #[error("bad magic {found:?}, expected {expected:?}")]
    BadMagic { expected: [u8; 4], found: [u8; 4] },

    #[error("unsupported version {0}")]
    UnsupportedVersion(u16),

    #[error("unsupported flags {0:#06x}")]
    UnsupportedFlags(u16),

    #[error("truncated input at byte offset {offset}: need {needed} more bytes")]
    Truncated { offset: usize, needed: usize },

    #[error("non-finite value at byte offset {offset}")]
    NonFinite { offset: usize },

    #[error("label {value} at byte offset {offset} is not 0 or 1")]
    BadLabel { offset: usize, value: u8 },

    #[error("invalid utf-8 string at byte offset {offset}")]
    BadUtf8 { offset: usize },

    #[error("source-tag index {index} at byte offset {offset} out of range ({count} tags)")]
    BadTagIndex { offset: usize, index: u32, count: u32 },

    #[error("duplicate record id {0:?}")]
    DuplicateId(String),

    #[error("{0} trailing bytes after last record")]
    TrailingBytes(usize),

    #[error("invalid field at byte offset {offset}: {reason}")]
    InvalidField { offset: usize, reason: String },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
