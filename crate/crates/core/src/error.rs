use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("malformed tensor header: {0}")]
    BadHeader(String),

    #[error("header declares {declared} values but payload holds {actual}")]
    HeaderMismatch { declared: usize, actual: usize },

    #[error("probabilities of pool point {pool}, member {member} sum to {sum}")]
    RowSumViolation { pool: usize, member: usize, sum: f64 },

    #[error("negative probability {value} at pool {pool}, member {member}, class {class}")]
    NegativeProbability {
        pool: usize,
        member: usize,
        class: usize,
        value: f64,
    },

    #[error("invalid shape: {0}")]
    InvalidShape(String),

    #[error("index {index} out of range for pool of size {n}")]
    IndexOutOfRange { index: usize, n: usize },

    #[error("pairwise quantity requested for a point with itself (index {0})")]
    SelfPair(usize),

    #[error("index {0} appears more than once in the subset")]
    DuplicateIndex(usize),

    #[error("{configs} joint configurations exceed the enumeration cap of {cap}; use Monte Carlo mode")]
    EnumerationCapExceeded { configs: u128, cap: usize },

    #[error("batch of {batch} requested from a pool of {pool}")]
    BatchLargerThanPool { batch: usize, pool: usize },

    #[error("invalid specification: {0}")]
    InvalidSpec(String),

    #[error("pool of {n} points exceeds the full pairwise matrix cap of {cap}")]
    PoolTooLarge { n: usize, cap: usize },

    #[error("bad IDX magic number: expected {expected:#010x}, found {found:#010x}")]
    BadMagic { expected: u32, found: u32 },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("label {label} out of range for {classes} classes (item {item})")]
    LabelOutOfRange {
        label: usize,
        classes: usize,
        item: usize,
    },

    #[error("non-positive performance value {value} for problem `{problem}`, solver `{solver}`")]
    NonPositiveError {
        problem: String,
        solver: String,
        value: f64,
    },

    #[error("empty input: {0}")]
    EmptyInput(String),

    #[error("I/O error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Stream(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
