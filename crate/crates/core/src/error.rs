use std::fmt;

use serde::{Deserialize, Serialize};

/// Failure category reported by an external AI capability.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ProviderErrorKind {
    Timeout,
    AuthFailure,
    RateLimited,
    MalformedResponse,
    Unavailable,
}

impl ProviderErrorKind {
    pub fn is_retryable(self) -> bool {
        matches!(self, Self::Timeout | Self::RateLimited | Self::Unavailable)
    }
}

impl fmt::Display for ProviderErrorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Self::Timeout => "timeout",
            Self::AuthFailure => "auth failure",
            Self::RateLimited => "rate limited",
            Self::MalformedResponse => "malformed response",
            Self::Unavailable => "unavailable",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("provider {kind}: {detail}")]
pub struct ProviderError {
    pub kind: ProviderErrorKind,
    pub detail: String,
}

impl ProviderError {
    pub fn new(kind: ProviderErrorKind, detail: impl Into<String>) -> Self {
        Self {
            kind,
            detail: detail.into(),
        }
    }

    pub fn timeout(detail: impl Into<String>) -> Self {
        Self::new(ProviderErrorKind::Timeout, detail)
    }

    pub fn unavailable(detail: impl Into<String>) -> Self {
        Self::new(ProviderErrorKind::Unavailable, detail)
    }

    pub fn malformed(detail: impl Into<String>) -> Self {
        Self::new(ProviderErrorKind::MalformedResponse, detail)
    }

    /// Retryable exactly for timeouts, rate limiting and unavailability.
    pub fn retryable(&self) -> bool {
        self.kind.is_retryable()
    }
}

#[derive(Debug, thiserror::Error)]
pub enum StorageError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("encoding error: {0}")]
    Encode(String),
    #[error("write interrupted at {0}")]
    Interrupted(String),
    #[error("unknown image reference {0}")]
    UnknownImage(String),
}

impl StorageError {
    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Self::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Provider(#[from] ProviderError),
    #[error(transparent)]
    Storage(#[from] StorageError),
    /// A caller violated an operation's precondition.
    #[error("usage error: {0}")]
    Usage(String),
    #[error("persona generation failed: {0}")]
    PersonaGeneration(String),
    #[error("no active session")]
    NoActiveSession,
    #[error("unknown object {0}")]
    UnknownObject(String),
    #[error("ritual engine has stopped")]
    EngineStopped,
    #[error("camera unavailable: {0}")]
    Camera(String),
    #[error("invalid configuration: {0}")]
    Config(String),
}

impl Error {
    pub fn usage(msg: impl Into<String>) -> Self {
        Self::Usage(msg.into())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
