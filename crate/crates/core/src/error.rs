use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),

    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("parameter out of range: {0}")]
    Parameter(String),

    #[error("absolute continuity violated: target puts mass {mass} on an item outside the reference support")]
    AbsoluteContinuity { mass: f64 },

    #[error("hypothesis of length {got} does not match domain size {expected}")]
    DomainMismatch { expected: usize, got: usize },

    #[error("sample too small: need at least {required} examples, got {got}")]
    SampleTooSmall { required: u64, got: u64 },

    #[error("internal inconsistency: {0}")]
    Internal(String),

    #[error("serialization: {0}")]
    Serde(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::Parameter(msg.into())
    }

    /// Errors that indicate a violated invariant rather than bad input.
    pub fn is_internal(&self) -> bool {
        matches!(self, Error::Internal(_))
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Serde(e.to_string())
    }
}

/// Checks that `x` lies in the open interval (0, 1).
pub(crate) fn open_unit(name: &str, x: f64) -> Result<()> {
    if x > 0.0 && x < 1.0 {
        Ok(())
    } else {
        Err(Error::param(format!("{name} = {x} must lie in (0, 1)")))
    }
}
