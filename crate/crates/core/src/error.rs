use std::path::PathBuf;

/// Invalid numeric input to an operation.
#[derive(Debug, Clone, thiserror::Error, PartialEq)]
pub enum DomainError {
    #[error("angle is not finite")]
    NonFiniteAngle,
    #[error("buffer is empty")]
    EmptyBuffer,
    #[error("invalid trajectory: {0}")]
    Trajectory(String),
    #[error("{0}")]
    Other(String),
}

/// A configuration value that violates its constraints.
#[derive(Debug, Clone, thiserror::Error, PartialEq)]
#[error("invalid `{key}`: {reason}")]
pub struct ConfigError {
    pub key: String,
    pub reason: String,
}

impl ConfigError {
    pub fn invalid(key: impl Into<String>, reason: impl Into<String>) -> Self {
        Self {
            key: key.into(),
            reason: reason.into(),
        }
    }

    pub(crate) fn in_section(mut self, section: &str) -> Self {
        self.key = format!("{section}.{}", self.key);
        self
    }
}

#[derive(Debug, thiserror::Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    Fs {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {reason}")]
    Format { path: PathBuf, reason: String },
}

impl IoError {
    pub(crate) fn fs(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        IoError::Fs {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, reason: impl Into<String>) -> Self {
        IoError::Format {
            path: path.into(),
            reason: reason.into(),
        }
    }
}
