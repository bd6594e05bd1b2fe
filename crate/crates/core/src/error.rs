use std::path::PathBuf;

/// Errors produced by the pruning engine, its analytics and the experiment front-end.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("empty input: {0}")]
    Empty(&'static str),
    #[error("non-finite value at index {index}")]
    NonFinite { index: usize },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("zero-norm vector at index {index}")]
    ZeroNorm { index: usize },
    #[error("budget {k} out of range 1..={max}")]
    BudgetOutOfRange { k: usize, max: usize },
    #[error("index {index} out of range for {len} tokens")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("step {step} out of range for {total} steps")]
    StepOutOfRange { step: usize, total: usize },
    #[error("index map mismatch: {0}")]
    IndexMapMismatch(&'static str),
    #[error("invalid config field `{field}`: {reason}")]
    InvalidConfig { field: String, reason: String },
    #[error("trace does not match scenario: {0}")]
    TraceMismatch(String),
    #[error("trace has no recorded attention at step {step}")]
    MissingAttention { step: usize },
    #[error("no eligible monitoring steps")]
    NoEligibleSteps,
    #[error("unsupported trace format version {found} (expected {expected})")]
    FormatVersion { found: u32, expected: u32 },
    #[error("malformed trace {path}: {reason}")]
    MalformedTrace { path: PathBuf, reason: String },
    #[error("no files match `{0}`")]
    NoMatches(String),
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error("config parse error: {0}")]
    Toml(#[from] toml::de::Error),
}

impl Error {
    pub(crate) fn config(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::InvalidConfig {
            field: field.into(),
            reason: reason.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by bad user input (configs, flags, trace files),
    /// as opposed to runtime failures such as I/O.
    pub fn is_validation(&self) -> bool {
        !matches!(self, Error::Io { .. } | Error::Csv(_))
    }
}

pub type Result<T> = std::result::Result<T, Error>;
