use thiserror::Error;

/// Errors raised across the library.
///
/// Variants are grouped so callers can map them onto coarse failure classes
/// (configuration, data, numerical) without matching every case.
#[derive(Debug, Error)]
pub enum Error {
    #[error("no valid annotations")]
    NoValidAnnotations,

    #[error("no co-annotations")]
    NoCoAnnotations,

    #[error("empty input: {0}")]
    EmptyInput(String),

    #[error("invalid value: {0}")]
    InvalidValue(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("length mismatch: expected {expected}, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },

    #[error("stale activation cache: parameters changed since forward pass")]
    StaleCache,

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("missing bench categories: {0}")]
    MissingCategories(String),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// Coarse failure class, used by the command-line front end for exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Config,
    Data,
    Numerical,
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Config(_) => ErrorClass::Config,
            Error::NonFinite(_) => ErrorClass::Numerical,
            _ => ErrorClass::Data,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
