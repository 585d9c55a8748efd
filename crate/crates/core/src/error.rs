use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Every failure the library can report.
///
/// Variants fall into two classes: I/O failures ([`Error::Io`]) and
/// everything else, which is some form of invalid input. Callers that need
/// a coarse classification (the CLI maps them to exit codes) can use
/// [`Error::is_io`].
#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("failed to parse {what}: {message}")]
    Parse { what: String, message: String },

    #[error("validation failed: {0}")]
    Validation(String),

    #[error("bad magic bytes in vectors file: expected \"T2AT\", found {found:?}")]
    BadMagic { found: [u8; 4] },

    #[error("unsupported store version {found} (expected {expected})")]
    VersionMismatch { expected: u32, found: u32 },

    #[error("dimension mismatch{}: expected {expected}, found {found}", fmt_id(.id))]
    DimensionMismatch {
        id: Option<String>,
        expected: usize,
        found: usize,
    },

    #[error("record {id:?} has a non-finite vector component at index {index}")]
    NonFinite { id: String, index: usize },

    #[error("duplicate record id {0:?}")]
    DuplicateId(String),

    #[error("record {0:?} has a zero vector")]
    ZeroVector(String),

    #[error("unknown group {label:?}; available groups: {}", .available.join(", "))]
    UnknownGroup {
        label: String,
        available: Vec<String>,
    },

    #[error("unknown {kind} {name:?}")]
    UnknownName { kind: &'static str, name: String },

    #[error("{0} must not be empty")]
    Empty(&'static str),

    #[error("permutation test needs an even pool size for equal partitions, got {0}")]
    OddPool(usize),

    #[error("exact enumeration of {splits} splits exceeds the cap of {cap}")]
    EnumerationCap { splits: u128, cap: u64 },

    #[error("effect size needs at least 2 samples per group (got {n_x} and {n_y})")]
    TooFewSamples { n_x: usize, n_y: usize },

    #[error("pooled standard deviation is zero; effect size is undefined")]
    DegenerateVariance,

    #[error("kendall tau is undefined: {0}")]
    UndefinedTau(&'static str),
}

fn fmt_id(id: &Option<String>) -> String {
    match id {
        Some(id) => format!(" in record {id:?}"),
        None => String::new(),
    }
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn parse(what: impl Into<String>, message: impl ToString) -> Self {
        Error::Parse {
            what: what.into(),
            message: message.to_string(),
        }
    }

    pub fn is_io(&self) -> bool {
        matches!(self, Error::Io { .. })
    }
}
