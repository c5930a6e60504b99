use std::path::PathBuf;

use thiserror::Error;

use crate::metrics::MetricKind;

pub type Result<T> = std::result::Result<T, Error>;

/// Coarse failure class, used by the CLI to pick an exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Config,
    Numeric,
    Io,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("non-finite value at flat index {index} ({context})")]
    NonFinite { context: &'static str, index: usize },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("no samples included in {kind} aggregate ({skipped} skipped)")]
    DegenerateAggregate { kind: MetricKind, skipped: u64 },

    #[error("correlation undefined: {0}")]
    UndefinedCorrelation(&'static str),

    #[error("training diverged at epoch {epoch}, batch {batch}: loss = {loss}")]
    Divergence { epoch: usize, batch: usize, loss: f64 },

    #[error("config error: {0}")]
    Config(String),

    #[error("bad magic \"{}\", expected \"{}\"", found.escape_ascii(), expected.escape_ascii())]
    BadMagic { expected: [u8; 4], found: [u8; 4] },

    #[error("unsupported format version {0}")]
    UnsupportedVersion(u32),

    #[error("unknown dtype code {0}")]
    BadDtype(u8),

    #[error("checksum mismatch: manifest {expected:016x}, payload {actual:016x}")]
    ChecksumMismatch { expected: u64, actual: u64 },

    #[error("malformed file: {0}")]
    Malformed(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("teacher `{teacher}`{}: {source}", seed.map(|s| format!(", seed {s}")).unwrap_or_default())]
    Cell {
        teacher: String,
        seed: Option<u64>,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub(crate) fn in_cell(self, teacher: &str, seed: Option<u64>) -> Self {
        Error::Cell { teacher: teacher.to_string(), seed, source: Box::new(self) }
    }

    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Config(_) | Error::InvalidArgument(_) | Error::Json(_) => ErrorClass::Config,
            Error::Io { .. }
            | Error::Csv(_)
            | Error::BadMagic { .. }
            | Error::UnsupportedVersion(_)
            | Error::BadDtype(_)
            | Error::ChecksumMismatch { .. }
            | Error::Malformed(_) => ErrorClass::Io,
            Error::Cell { source, .. } => source.class(),
            _ => ErrorClass::Numeric,
        }
    }
}
