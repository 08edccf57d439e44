use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("vector norm is at or below the zero-vector guard")]
    ZeroVector,
    #[error("empty point set")]
    EmptySet,
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("k = {k} is too large for a set of {available} usable points")]
    KTooLarge { k: usize, available: usize },
    #[error("cone has no members")]
    EmptyCone,
    #[error("no scores to calibrate on")]
    EmptyScores,
    #[error("threshold at TPR {target} falls on an uncovered observation; only {covered:.4} of calibration observations lie in any cone")]
    CalibrationUnreachable { target: f64, covered: f64 },
    #[error("label mismatch: {0}")]
    LabelMismatch(String),
    #[error("class {label} has {size} observations, at least {required} required")]
    ClassTooSmall {
        label: u32,
        size: usize,
        required: usize,
    },
    #[error("degenerate value range: min = max = {0}")]
    DegenerateRange(f64),
    #[error("invalid range: {0}")]
    InvalidRange(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("invalid mixture spec: {0}")]
    InvalidSpec(String),
    #[error("non-finite value at {0}")]
    NonFinite(String),
    #[error("bad magic at byte offset {offset}")]
    BadMagic { offset: u64 },
    #[error("unsupported dtype {descr:?} at byte offset {offset}")]
    UnsupportedDtype { descr: String, offset: u64 },
    #[error("unsupported format version {0}")]
    VersionUnsupported(u32),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("malformed header at byte offset {offset}: {reason}")]
    BadHeader { offset: u64, reason: String },
    #[error("file truncated at byte offset {offset}")]
    Truncated { offset: u64 },
    #[error("CSV parse error at row {row}: {reason}")]
    Csv { row: usize, reason: String },
    #[error("cannot access {}", path.display())]
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
