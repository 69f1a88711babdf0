use thiserror::Error;

/// Errors raised by the toolkit.
///
/// Variants are grouped into the classes the command-line frontend maps to
/// exit codes: configuration, numeric degradation and search failure.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid rational map: {0}")]
    InvalidMap(String),

    #[error("root finder did not converge (max residual {max_residual:.3e})")]
    RootFinding { max_residual: f64, residuals: Vec<f64> },

    #[error("orbit escaped at step {index}")]
    Escape { index: usize },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("point lies within {distance:.3e} of the forward critical orbit at index {index}")]
    CriticalOrbit { index: usize, distance: f64 },

    #[error("strong separation violated: {0}")]
    Separation(String),

    #[error("no bridge found within search depth {depth}: {detail}")]
    BridgeNotFound { depth: usize, detail: String },

    #[error("growth predicate cannot be met before the block-length bound at block {block}")]
    ScheduleOverflow { block: usize },

    #[error("schedule is missing a bridge from subsystem {from} to subsystem {to}")]
    MissingBridge { from: usize, to: usize },

    #[error("numeric degradation: {0}")]
    Degraded(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("i/o error: {0}")]
    Io(String),
}

/// Coarse error classes used for process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Config,
    Numeric,
    Search,
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Config(_) | Error::Io(_) | Error::InvalidMap(_) | Error::Precondition(_) => {
                ErrorClass::Config
            }
            Error::BridgeNotFound { .. } | Error::MissingBridge { .. } => ErrorClass::Search,
            _ => ErrorClass::Numeric,
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Config(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
