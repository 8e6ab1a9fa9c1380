use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("bad magic bytes {found:?}, expected \"EMB1\"")]
    BadMagic { found: [u8; 4] },

    #[error("unsupported EMB1 version {0}")]
    UnsupportedVersion(u32),

    #[error("file truncated: needed {needed} bytes at offset {offset}, {available} available")]
    TruncatedFile {
        offset: usize,
        needed: usize,
        available: usize,
    },

    #[error("{0} trailing bytes after the last record")]
    TrailingBytes(usize),

    #[error("non-finite feature in record {record}, component {component}")]
    NonFiniteFeature { record: usize, component: usize },

    #[error("class {class_id} appears in both base and novel splits")]
    SplitOverlap { class_id: u32 },

    #[error("dimension mismatch: expected {expected}, got {found}")]
    DimMismatch { expected: usize, found: usize },

    #[error("feature dimension must be positive")]
    ZeroDim,

    #[error("invalid split code {0}")]
    InvalidSplit(u8),

    #[error("malformed class-name table: {0}")]
    NameTable(String),

    #[error("parse error at row {row}: {message}")]
    Parse { row: usize, message: String },

    #[error("class {0} has no records in the requested split")]
    EmptyClass(u32),

    #[error("duplicate class {0} within a prototype bank")]
    DuplicateClass(u32),

    #[error("cosine distance undefined for a zero vector")]
    ZeroVector,

    #[error("no prototypes available")]
    EmptyBanks,

    #[error("novel branch selected but the novel bank is empty")]
    NovelBankEmpty,

    #[error("bank kinds mismatch: expected a {expected} bank")]
    BankKind { expected: &'static str },

    #[error("empty split: {0}")]
    EmptySplit(&'static str),

    #[error("budget {0} outside [0, 1]")]
    InvalidBudget(f64),

    #[error("threshold {0} must be finite and non-negative")]
    InvalidAlpha(f64),

    #[error("no candidate threshold satisfies budget {0}")]
    InfeasibleBudget(f64),

    #[error("infeasible episode spec: {0}")]
    InfeasibleSpec(String),

    #[error("episode has no query samples")]
    EmptyQuerySet,

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("could not place novel class means at the requested angular margin after {attempts} attempts")]
    RejectionFailure { attempts: usize },

    #[error("sigma search did not reach BCR {target} within {iterations} iterations (last {last})")]
    NoConvergence {
        target: f64,
        iterations: usize,
        last: f64,
    },

    #[error("report schema violation at {path}: {message}")]
    Schema { path: String, message: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

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

    /// Process exit code for the CLI: 2 usage, 3 data, 4 infeasible spec.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::InvalidBudget(_) | Error::InvalidAlpha(_) => 2,
            Error::InfeasibleSpec(_)
            | Error::EmptyQuerySet
            | Error::InfeasibleBudget(_)
            | Error::RejectionFailure { .. }
            | Error::NoConvergence { .. } => 4,
            _ => 3,
        }
    }
}
