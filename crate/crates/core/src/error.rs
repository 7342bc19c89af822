use thiserror::Error;

use crate::data::Arm;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("matrix is not positive definite (pivot {pivot} at index {index})")]
    NotPositiveDefinite { index: usize, pivot: f64 },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("non-monotone missingness in records: {}", .ids.join(", "))]
    NonMonotoneMissingness { ids: Vec<String> },

    #[error("baseline outcome missing in records: {}", .ids.join(", "))]
    MissingBaseline { ids: Vec<String> },

    #[error("malformed row {line}: {reason}")]
    MalformedRow { line: usize, reason: String },

    #[error("duplicate patient ids: {}", .ids.join(", "))]
    DuplicateIds { ids: Vec<String> },

    #[error("{0} arm has no patients")]
    EmptyArm(Arm),

    #[error("{arm} arm has {n} patients; at least 2 are needed to estimate a variance")]
    DegenerateVariance { arm: Arm, n: usize },

    #[error("stage {stage} has {available} observations but needs {required}")]
    InsufficientData {
        stage: usize,
        available: usize,
        required: usize,
    },

    #[error("singular design matrix")]
    SingularDesign,

    #[error("dataset is not fully observed (record {id})")]
    Incomplete { id: String },

    #[error("at least 2 imputations are needed, got {0}")]
    TooFewImputations(usize),

    #[error("bootstrap grid is degenerate: every estimate equals {theta_bar}")]
    DegenerateGrid { theta_bar: f64 },

    #[error("bootstrap replicate {replicate} failed after {attempts} attempts: {source}")]
    BootstrapFailed {
        replicate: usize,
        attempts: usize,
        source: Box<Error>,
    },

    #[error("no observed reference-arm outcomes")]
    NoObservedReference,

    #[error("{failed} of {total} replications failed (first: {first})")]
    TooManyFailures {
        failed: usize,
        total: usize,
        first: String,
    },

    #[error("config: {0}")]
    Config(String),

    #[error("io: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
