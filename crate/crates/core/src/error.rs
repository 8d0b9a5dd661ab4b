use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("empty corpus")]
    EmptyCorpus,

    #[error("empty dataset")]
    EmptyDataset,

    #[error("class missing: no examples with label {0}")]
    ClassMissing(u8),

    #[error("train fraction must lie strictly between 0 and 1, got {0}")]
    InvalidFraction(f64),

    #[error("need at least {needed} examples, got {got}")]
    TooFewExamples { needed: usize, got: usize },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("shape mismatch: {left} vs {right}")]
    Shape { left: String, right: String },

    #[error("index {index} out of range for table with {rows} rows")]
    IndexOutOfRange { index: usize, rows: usize },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("unsupported bundle format version {found} (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },

    #[error("vocabulary hash mismatch: manifest {expected}, file {found}")]
    HashMismatch { expected: String, found: String },

    #[error("weights blob is {found} bytes, manifest implies {expected}")]
    BlobSize { expected: u64, found: u64 },

    #[error("malformed manifest: {0}")]
    Manifest(String),

    #[error("reports were evaluated on different test sets")]
    MismatchedTestSets,

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
