use thiserror::Error;

/// Every failure the library can report. The CLI maps variants to exit codes.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("no convergence: {what} (final residual {residual:e})")]
    Convergence { what: String, residual: f64 },
    #[error("config error: {0}")]
    Config(String),
    #[error("shape mismatch: expected {expected}, got {got}")]
    Shape { expected: usize, got: usize },
    #[error("regime error: {0}")]
    Regime(String),
    #[error("right-hand side has nonzero generalized mean {0:e}")]
    Mean(f64),
    #[error("linear solver failure: {0}")]
    Solver(String),
    #[error("inadmissible initial data: {0}")]
    Init(String),
    #[error("invalid parameter: {0}")]
    Param(String),
    #[error("fit failed: {0}")]
    Fit(String),
    #[error("parse error at {location}: {message}")]
    Parse { location: String, message: String },
    #[error("invalid configuration:\n  {}", .0.join("\n  "))]
    Validation(Vec<String>),
    #[error("invariant violated: {0}")]
    Invariant(String),
    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_len(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::Shape { expected, got })
    }
}
