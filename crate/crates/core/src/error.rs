use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid break schedule: {0}")]
    InvalidSchedule(String),

    #[error("invalid specification: {0}")]
    InvalidSpec(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("length mismatch for {what}: expected {expected}, got {got}")]
    LengthMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    /// An infinite sum does not converge; `regime` is 1-based, regime 1 the most recent.
    #[error("divergent series: regime {regime} has rate {rate} >= 1")]
    Divergent { regime: usize, rate: f64 },

    #[error("non-positive conditional variance at index {index}: {value}")]
    NonPositiveVariance { index: usize, value: f64 },

    #[error("optimizer did not converge: {0}")]
    Convergence(String),

    #[error("singular matrix (condition number {condition:.3e})")]
    Singular { condition: f64 },

    #[error("degenerate data: {0}")]
    Degenerate(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Process exit code for the command-line front end: 1 usage, 2 data, 3 numerical.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 1,
            Error::Io(_) | Error::Parse { .. } | Error::Degenerate(_) | Error::Json(_) => 2,
            Error::LengthMismatch { .. }
            | Error::InvalidSchedule(_)
            | Error::InvalidSpec(_)
            | Error::Domain(_) => 2,
            Error::Divergent { .. }
            | Error::NonPositiveVariance { .. }
            | Error::Convergence(_)
            | Error::Singular { .. } => 3,
        }
    }
}
