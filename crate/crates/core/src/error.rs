use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("degree mismatch: expected {expected}, got {got}")]
    DegreeMismatch { expected: usize, got: usize },

    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("unsupported expression at line {line}, column {column}: {message}")]
    Unsupported {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("empty ODE system")]
    EmptySystem,

    /// A rollout or integration left the finite / guarded region.
    #[error("divergence at {context} step {step}: {message}")]
    Divergence {
        context: String,
        step: usize,
        message: String,
    },

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("matrix has no principal logarithm: {0}")]
    NoPrincipalLog(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid data: {0}")]
    Data(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Numeric failures (divergence, non-convergence, non-finite values) as
    /// opposed to malformed input or usage.
    pub fn is_numeric(&self) -> bool {
        matches!(
            self,
            Error::Divergence { .. } | Error::NonFinite(_) | Error::NoPrincipalLog(_)
        )
    }

    /// Short machine-readable tag for the error kind.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::DimensionMismatch { .. } => "dimension-mismatch",
            Error::DegreeMismatch { .. } => "degree-mismatch",
            Error::Parse { .. } => "parse",
            Error::Unsupported { .. } => "unsupported-expression",
            Error::EmptySystem => "empty-system",
            Error::Divergence { .. } => "divergence",
            Error::NonFinite(_) => "non-finite",
            Error::NoPrincipalLog(_) => "no-principal-log",
            Error::InvalidConfig(_) => "invalid-config",
            Error::Data(_) => "invalid-data",
            Error::Io(_) => "io",
            Error::Csv(_) => "csv",
            Error::Json(_) => "json",
        }
    }
}
