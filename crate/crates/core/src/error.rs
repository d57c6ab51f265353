use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("conflicting fact: {predicate}({subject},{time}) already holds bin {existing}, got bin {new}")]
    ConflictingFact {
        predicate: String,
        subject: String,
        time: u32,
        existing: u8,
        new: u8,
    },

    #[error("malformed fact: {0}")]
    MalformedFact(String),

    #[error("unknown predicate `{0}`")]
    UnknownPredicate(String),

    #[error("fact store is frozen")]
    StoreFrozen,

    #[error("fact store is not frozen")]
    StoreNotFrozen,

    #[error("non-finite value {0}")]
    NonFiniteValue(f64),

    #[error("unknown parameter `{0}`")]
    UnknownParameter(String),

    #[error("unknown bin label `{label}` for parameter `{parameter}`")]
    UnknownBinLabel { parameter: String, label: String },

    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("invalid schema: {0}")]
    InvalidSchema(String),

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("degenerate examples for `{0}`: both positive and negative examples are required")]
    DegenerateExamples(String),

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("label leakage: target `{0}` used as a concurrent literal")]
    LabelLeak(String),

    #[error("inconsistent rule set: {fired} rules fired for {subject}@{time}")]
    InconsistentRuleSet {
        fired: usize,
        subject: String,
        time: u32,
    },

    #[error("too few subjects: {0} (need at least 2)")]
    TooFewSubjects(usize),

    #[error("single class: AUC-ROC needs both positive and negative examples")]
    SingleClass,

    #[error("no positives: AUC-PR needs at least one positive example")]
    NoPositives,

    #[error("unsupported model format version {found} (expected {expected})")]
    FormatVersion { found: u32, expected: u32 },

    #[error("schema hash mismatch: model has {model}, supplied schema has {supplied}")]
    SchemaMismatch { model: String, supplied: String },

    #[error("model format error: {0}")]
    Model(String),

    #[error("i/o error on {path}: {message}")]
    Io { path: String, message: String },
}

impl Error {
    pub(crate) fn parse(line: usize, column: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            line,
            column,
            message: message.into(),
        }
    }

    pub(crate) fn io(path: impl AsRef<std::path::Path>, err: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            message: err.to_string(),
        }
    }

    /// True when the error signals a broken internal invariant rather than bad input.
    pub fn is_internal(&self) -> bool {
        matches!(self, Error::InconsistentRuleSet { .. } | Error::LabelLeak(_))
    }
}
