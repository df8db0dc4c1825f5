use std::fmt;
use std::io;

/// Crate-wide error type.
#[derive(Debug)]
pub enum SimError {
    Io(io::Error),
    /// Malformed input file (wrong magic, truncated payload, bad JSON, ...).
    Format(String),
    /// Inputs violate a documented precondition or invariant.
    Validation(String),
    /// A geometric query could not be answered (e.g. no SDF normal here).
    Geometry(String),
}

impl SimError {
    pub fn format(msg: impl Into<String>) -> Self {
        SimError::Format(msg.into())
    }

    pub fn validation(msg: impl Into<String>) -> Self {
        SimError::Validation(msg.into())
    }

    pub fn geometry(msg: impl Into<String>) -> Self {
        SimError::Geometry(msg.into())
    }
}

impl fmt::Display for SimError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SimError::Io(e) => write!(f, "io error: {e}"),
            SimError::Format(m) => write!(f, "format error: {m}"),
            SimError::Validation(m) => write!(f, "validation error: {m}"),
            SimError::Geometry(m) => write!(f, "geometry error: {m}"),
        }
    }
}

impl std::error::Error for SimError {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        match self {
            SimError::Io(e) => Some(e),
            _ => None,
        }
    }
}

impl From<io::Error> for SimError {
    fn from(e: io::Error) -> Self {
        SimError::Io(e)
    }
}

impl From<serde_json::Error> for SimError {
    fn from(e: serde_json::Error) -> Self {
        SimError::Format(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, SimError>;
