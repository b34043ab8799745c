use thiserror::Error;

/// Every failure the toolkit can report.
///
/// Variants carry enough context to be rendered as a one-line diagnostic by
/// the CLI; the CLI maps them to exit codes.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum AuditError {
    #[error("instance kind mismatch: expected {expected}, got {found}")]
    KindMismatch { expected: String, found: String },

    #[error("oracle is closed for this phase of the game")]
    PhaseClosed,

    #[error("loss {loss} cannot compare prediction {prediction} with label {label}")]
    IncompatibleKinds {
        loss: &'static str,
        prediction: &'static str,
        label: &'static str,
    },

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("fragment of length {found} cannot be scored by an order-{order} model")]
    FragmentLengthMismatch { order: usize, found: usize },

    #[error("index {index} out of range for dataset of size {len}")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("deletion would leave an empty dataset")]
    EmptyResult,

    #[error("enumerating {required} fragments exceeds the query budget of {cap}")]
    DictionaryTooLarge { required: u128, cap: u64 },

    #[error("path search exceeded its budget of {0} node expansions")]
    SearchBudgetExceeded(u64),

    #[error("invalid configuration at `{path}`: {reason}")]
    ConfigInvalid { path: String, reason: String },

    #[error("environment issued {used} deletions, only {allowed} are allowed")]
    BudgetViolation { used: usize, allowed: usize },

    #[error("cannot draw {n} distinct points from {{0,1}}^{d}")]
    InfeasibleSingleton { n: usize, d: usize },

    #[error("parse error on line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("schema mismatch: {0}")]
    SchemaMismatch(String),

    #[error("non-numeric feature on line {line}, column `{column}`")]
    NonNumericFeature { line: usize, column: String },

    #[error("corpus contains no sentences")]
    EmptyCorpus,

    #[error("unknown preset `{0}`")]
    UnknownPreset(String),

    #[error("protocol error: {0}")]
    Protocol(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl AuditError {
    pub fn config(path: impl Into<String>, reason: impl Into<String>) -> Self {
        AuditError::ConfigInvalid {
            path: path.into(),
            reason: reason.into(),
        }
    }

    pub fn kind_mismatch(expected: impl Into<String>, found: impl Into<String>) -> Self {
        AuditError::KindMismatch {
            expected: expected.into(),
            found: found.into(),
        }
    }
}

impl From<std::io::Error> for AuditError {
    fn from(e: std::io::Error) -> Self {
        AuditError::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, AuditError>;
