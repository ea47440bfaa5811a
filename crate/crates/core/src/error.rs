use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("empty input: no header line")]
    MissingHeader,

    #[error("missing column `{0}`")]
    MissingColumn(String),

    #[error("duplicate column name `{0}`")]
    DuplicateColumn(String),

    #[error("row {row}: expected {expected} cells, found {found}")]
    RaggedRow {
        row: usize,
        expected: usize,
        found: usize,
    },

    #[error("row {row}, column `{column}`: cannot parse `{value}` as a number")]
    NotNumeric {
        row: usize,
        column: String,
        value: String,
    },

    #[error("row {row}, column `{column}`: value is not finite")]
    NonFinite { row: usize, column: String },

    #[error("table is empty")]
    EmptyTable,

    #[error("need at least two classes, found {0}")]
    SingleClass(usize),

    #[error("class `{class}` has {count} row(s); at least 2 are required")]
    ClassTooSmall { class: String, count: usize },

    #[error("need at least {needed} rows, found {found}")]
    TooFewRows { needed: usize, found: usize },

    #[error("schema mismatch: expected {expected:?}, found {found:?}")]
    SchemaMismatch {
        expected: Vec<String>,
        found: Vec<String>,
    },

    #[error("bit width {0} outside [1, 32]")]
    InvalidBits(u32),

    #[error("code {code} at row {row}, feature {feature} does not fit in {bits} bits")]
    CodeOutOfRange {
        row: usize,
        feature: usize,
        code: u64,
        bits: u8,
    },

    #[error("every feature is constant; covariance is zero")]
    ZeroVariance,

    #[error("bad magic bytes {0:?}")]
    BadMagic([u8; 4]),

    #[error("unsupported container version {0}")]
    UnsupportedVersion(u8),

    #[error("truncated {what}: expected {expected} bytes, found {actual}")]
    Truncated {
        what: &'static str,
        expected: u64,
        actual: u64,
    },

    #[error("corrupt container: {0}")]
    Corrupt(String),

    #[error("no bits-absent baseline point for selection={selection_k:?}, pca={pca_target:?}")]
    MissingBaseline {
        selection_k: Option<usize>,
        pca_target: Option<f64>,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    /// True for filesystem failures, as opposed to malformed data or arguments.
    pub fn is_io(&self) -> bool {
        matches!(self, Error::Io { .. })
    }
}
