//! Record/replay fixtures for chat: a directory of `<request-hash>.json`
//! files, each holding one request and the reply it received.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use async_trait::async_trait;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{ChatProvider, ChatRequest};
use crate::error::ProviderError;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChatFixture {
    pub request: ChatRequest,
    pub response: String,
}

/// Hex SHA-256 of the request's canonical JSON encoding.
pub fn request_hash(req: &ChatRequest) -> String {
    let bytes = serde_json::to_vec(req).expect("chat request serializes");
    hex::encode(Sha256::digest(bytes))
}

#[derive(Clone)]
pub enum ReplayMode {
    /// Serve only from the fixture directory.
    Replay,
    /// Forward to the inner provider and save each exchange.
    Record(Arc<dyn ChatProvider>),
}

#[derive(Clone)]
pub struct ReplayChat {
    dir: PathBuf,
    mode: ReplayMode,
}

impl ReplayChat {
    pub fn replay(dir: impl Into<PathBuf>) -> Self {
        Self {
            dir: dir.into(),
            mode: ReplayMode::Replay,
        }
    }

    pub fn record(dir: impl Into<PathBuf>, inner: Arc<dyn ChatProvider>) -> Self {
        Self {
            dir: dir.into(),
            mode: ReplayMode::Record(inner),
        }
    }

    pub fn fixture_path(&self, req: &ChatRequest) -> PathBuf {
        self.dir.join(format!("{}.json", request_hash(req)))
    }

    fn load(path: &Path) -> Result<Option<ChatFixture>, ProviderError> {
        match std::fs::read(path) {
            Ok(bytes) => serde_json::from_slice(&bytes)
                .map(Some)
                .map_err(|e| ProviderError::malformed(format!("fixture {}: {e}", path.display()))),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(ProviderError::unavailable(format!("fixture {}: {e}", path.display()))),
        }
    }
}

#[async_trait]
impl ChatProvider for ReplayChat {
    async fn chat(&self, req: &ChatRequest) -> Result<String, ProviderError> {
        let path = self.fixture_path(req);
        match &self.mode {
            ReplayMode::Replay => Self::load(&path)?
                .map(|f| f.response)
                .ok_or_else(|| {
                    ProviderError::unavailable(format!("no fixture {}", path.display()))
                }),
            ReplayMode::Record(inner) => {
                let response = inner.chat(req).await?;
                let fixture = ChatFixture {
                    request: req.clone(),
                    response: response.clone(),
                };
                let body = serde_json::to_vec_pretty(&fixture)
                    .map_err(|e| ProviderError::malformed(e.to_string()))?;
                std::fs::create_dir_all(&self.dir)
                    .and_then(|_| std::fs::write(&path, body))
                    .map_err(|e| ProviderError::unavailable(format!("recording fixture: {e}")))?;
                Ok(response)
            }
        }
    }
}
