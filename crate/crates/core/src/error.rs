use thiserror::Error;

/// Errors raised anywhere in the pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("line {line}: malformed line: {reason}")]
    MalformedLine { line: usize, reason: String },

    #[error("line {line}: unknown label `{label}`")]
    UnknownLabel { line: usize, label: String },

    #[error("line {line}: `{label}` does not continue an entity of the same type")]
    IllegalBioTransition { line: usize, label: String },

    #[error("line {line}: unknown entity type `{entity_type}`")]
    UnknownType { line: usize, entity_type: String },

    #[error("lexicon entry `{surface}` is listed as both {first} and {second}")]
    DuplicateConflictingEntry {
        surface: String,
        first: String,
        second: String,
    },

    #[error("vocabulary does not contain the unknown token `{0}`")]
    MissingUnkToken(String),

    #[error("corpus contains no tokens")]
    EmptyCorpus,

    #[error("transport instance has no rows or no columns")]
    InstanceEmpty,

    #[error("row `{word}`/{category} has no admissible subword")]
    InfeasibleRow { word: String, category: String },

    #[error("column `{0}` has no admissible row")]
    InfeasibleColumn(String),

    #[error("entropic regularization must be positive, got {0}")]
    NonPositiveGamma(f64),

    #[error("invalid solver configuration: {0}")]
    InvalidSolverConfig(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("Sinkhorn did not converge after {iterations} iterations (marginal violation {marginal_error:e})")]
    NotConverged {
        iterations: usize,
        marginal_error: f64,
    },

    #[error("kernel underflow in plain Sinkhorn ({0}); use log-domain stabilization")]
    NumericalUnderflow(String),

    #[error("word `{0}` has no enumerated segmentations")]
    MissingSegmentations(String),

    #[error("q assigns zero mass to ({subword}, {category}) where p is positive")]
    SupportViolation { subword: String, category: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid policy record on line {line}: {reason}")]
    InvalidPolicy { line: usize, reason: String },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Coarse error classes, used for process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Config,
    Data,
    Numerical,
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Config(_) | Error::InvalidSolverConfig(_) | Error::NonPositiveGamma(_) => {
                ErrorClass::Config
            }
            Error::NotConverged { .. }
            | Error::NumericalUnderflow(_)
            | Error::InfeasibleRow { .. }
            | Error::InfeasibleColumn(_) => ErrorClass::Numerical,
            _ => ErrorClass::Data,
        }
    }

    /// Process exit code: 2 config, 3 data, 4 numerical.
    pub fn exit_code(&self) -> i32 {
        match self.class() {
            ErrorClass::Config => 2,
            ErrorClass::Data => 3,
            ErrorClass::Numerical => 4,
        }
    }

    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }
}
