use disco_core::DiscoError;
use thiserror::Error;

/// Command failures, each mapped to a process exit code.
#[derive(Debug, Error)]
pub enum Failure {
    #[error("check failed: {0}")]
    Check(String),

    #[error("usage: {0}")]
    Usage(String),

    #[error("i/o: {0}")]
    Io(String),
}

impl Failure {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Check(_) => 1,
            Self::Usage(_) => 2,
            Self::Io(_) => 3,
        }
    }
}

impl From<DiscoError> for Failure {
    fn from(e: DiscoError) -> Self {
        match e {
            DiscoError::Io(_) | DiscoError::Format { .. } => Self::Io(e.to_string()),
            DiscoError::NonFinite(_) | DiscoError::Diverged { .. } => Self::Check(e.to_string()),
            _ => Self::Usage(e.to_string()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Self::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        Self::Io(format!("report: {e}"))
    }
}
