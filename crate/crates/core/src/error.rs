//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    // ---- code parsing / code maps ----
    #[error("empty code")]
    EmptyCode,
    #[error("illegal character {ch:?} in code {raw:?}")]
    IllegalCharacter { raw: String, ch: char },
    #[error("malformed range {text:?}: {reason}")]
    MalformedRange { text: String, reason: String },
    #[error("codemap parse error at line {line}, column {col}: {msg}")]
    ParseError {
        line: usize,
        col: usize,
        msg: String,
    },
    #[error("duplicate category {0:?}")]
    DuplicateCategory(String),
    #[error("unsorted input: dates must be ascending")]
    UnsortedInput,

    // ---- event ingestion ----
    #[error("schema error in {file} row {row}: {msg}")]
    SchemaError {
        file: String,
        row: usize,
        msg: String,
    },
    #[error("event references unknown person {0:?}")]
    OrphanEvent(String),
    #[error("bad date {date} for person {person_id}: {msg}")]
    BadDate {
        person_id: String,
        date: String,
        msg: String,
    },
    #[error("unknown person {0:?}")]
    UnknownPerson(String),
    #[error("unknown category {0:?}")]
    UnknownCategory(String),

    // ---- synthesis ----
    #[error("invalid config: {0}")]
    InvalidConfig(String),

    // ---- featurization ----
    #[error("cohort was built from a different store: {0}")]
    CohortStoreMismatch(String),
    #[error("age {0} out of range (must be >= 18)")]
    OutOfRange(i32),
    #[error("empty matrix")]
    EmptyMatrix,

    // ---- preprocessing ----
    #[error("degenerate column {0:?}: fewer than 2 distinct values")]
    DegenerateColumn(String),
    #[error("single class present; need both positive and negative labels")]
    SingleClass,
    #[error("too small: {n} rows (need at least {min})")]
    TooSmall { n: usize, min: usize },

    // ---- model fitting ----
    #[error("singular design matrix (collinear beyond ridge rescue)")]
    Singular,
    #[error("column mismatch: model expects {expected:?}, got {got:?}")]
    ColumnMismatch {
        expected: Vec<String>,
        got: Vec<String>,
    },

    // ---- io ----
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{0}")]
    Format(String),
}

impl Error {
    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Whether the error reflects bad user input (CLI exit code 1) rather
    /// than an internal failure (exit code 2).
    pub fn is_validation(&self) -> bool {
        !matches!(self, Error::Singular)
    }
}
