//! Uniform abstractions over the five external AI capabilities: vision
//! description, embedding, chat completion, speech synthesis and speech
//! transcription.
//!
//! Each capability is a trait with an HTTP-backed implementation in [`live`]
//! and a deterministic stand-in in [`mock`]. Callers go through
//! [`ProviderSet`], which enforces request preconditions before any provider
//! sees the request.

pub mod live;
pub mod mock;
pub mod replay;
pub mod retry;

use std::fmt;
use std::sync::Arc;

use async_trait::async_trait;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::embedding::Embedding;
use crate::error::{Error, ProviderError, Result};

/// Speech engine identifier used when none is configured.
pub const DEFAULT_SPEECH_ENGINE: &str = "eleven_turbo_v2_5";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ImageMime {
    #[serde(rename = "image/jpeg")]
    Jpeg,
    #[serde(rename = "image/png")]
    Png,
}

impl ImageMime {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Jpeg => "image/jpeg",
            Self::Png => "image/png",
        }
    }

    pub fn extension(self) -> &'static str {
        match self {
            Self::Jpeg => "jpg",
            Self::Png => "png",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "image/jpeg" | "image/jpg" => Ok(Self::Jpeg),
            "image/png" => Ok(Self::Png),
            other => Err(Error::usage(format!("unsupported image type {other:?}"))),
        }
    }

    /// Sniffs magic bytes, falling back to the file extension of `name`.
    pub fn detect(bytes: &[u8], name: Option<&str>) -> Option<Self> {
        if bytes.starts_with(b"\x89PNG\r\n\x1a\n") {
            return Some(Self::Png);
        }
        if bytes.starts_with(&[0xff, 0xd8, 0xff]) {
            return Some(Self::Jpeg);
        }
        let ext = name?.rsplit_once('.')?.1.to_ascii_lowercase();
        match ext.as_str() {
            "png" => Some(Self::Png),
            "jpg" | "jpeg" => Some(Self::Jpeg),
            _ => None,
        }
    }
}

#[derive(Clone, PartialEq, Eq)]
pub struct VisionRequest {
    image_bytes: Vec<u8>,
    mime_type: ImageMime,
}

impl VisionRequest {
    pub fn new(image_bytes: Vec<u8>, mime_type: ImageMime) -> Result<Self> {
        if image_bytes.is_empty() {
            return Err(Error::usage("image bytes must be non-empty"));
        }
        Ok(Self {
            image_bytes,
            mime_type,
        })
    }

    pub fn image_bytes(&self) -> &[u8] {
        &self.image_bytes
    }

    pub fn mime_type(&self) -> ImageMime {
        self.mime_type
    }
}

impl fmt::Debug for VisionRequest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("VisionRequest")
            .field("bytes", &self.image_bytes.len())
            .field("mime_type", &self.mime_type)
            .finish()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChatRole {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: ChatRole,
    pub text: String,
}

impl ChatMessage {
    pub fn user(text: impl Into<String>) -> Self {
        Self {
            role: ChatRole::User,
            text: text.into(),
        }
    }

    pub fn assistant(text: impl Into<String>) -> Self {
        Self {
            role: ChatRole::Assistant,
            text: text.into(),
        }
    }
}

/// Which output grammar the caller expects the model to follow.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ResponseSchema {
    FreeText,
    PersonaSheet,
    TwoTierTurn,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub system_prompt: String,
    pub messages: Vec<ChatMessage>,
    pub response_schema: ResponseSchema,
}

impl ChatRequest {
    /// Messages must be non-empty, and after any leading system entries the
    /// roles alternate starting with the user.
    pub fn validate(&self) -> Result<()> {
        if self.messages.is_empty() {
            return Err(Error::usage("chat request has no messages"));
        }
        let mut expect = ChatRole::User;
        for m in self
            .messages
            .iter()
            .skip_while(|m| m.role == ChatRole::System)
        {
            if m.role != expect {
                return Err(Error::usage(format!(
                    "chat roles must alternate user/assistant, found {:?} where {:?} expected",
                    m.role, expect
                )));
            }
            expect = match expect {
                ChatRole::User => ChatRole::Assistant,
                _ => ChatRole::User,
            };
        }
        Ok(())
    }

    /// Text of the final user message, if any.
    pub fn last_user_text(&self) -> Option<&str> {
        self.messages
            .iter()
            .rev()
            .find(|m| m.role == ChatRole::User)
            .map(|m| m.text.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpeechRequest {
    pub text: String,
    pub voice_id: String,
    pub engine_tag: String,
}

impl SpeechRequest {
    pub fn new(text: impl Into<String>, voice_id: impl Into<String>) -> Result<Self> {
        let text = text.into();
        if text.trim().is_empty() {
            return Err(Error::usage("speech text must be non-empty"));
        }
        Ok(Self {
            text,
            voice_id: voice_id.into(),
            engine_tag: DEFAULT_SPEECH_ENGINE.to_string(),
        })
    }

    pub fn with_engine(mut self, engine_tag: impl Into<String>) -> Self {
        self.engine_tag = engine_tag.into();
        self
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SpeechAudio {
    pub bytes: Vec<u8>,
    pub duration_ms: u64,
}

#[async_trait]
pub trait VisionProvider: Send + Sync {
    async fn describe_image(&self, req: &VisionRequest) -> Result<String, ProviderError>;
}

#[async_trait]
pub trait EmbeddingProvider: Send + Sync {
    async fn embed_image(&self, req: &VisionRequest) -> Result<Embedding, ProviderError>;
    async fn embed_text(&self, text: &str) -> Result<Embedding, ProviderError>;
}

#[async_trait]
pub trait ChatProvider: Send + Sync {
    async fn chat(&self, req: &ChatRequest) -> Result<String, ProviderError>;
}

#[async_trait]
pub trait SpeechProvider: Send + Sync {
    async fn synthesize_speech(&self, req: &SpeechRequest) -> Result<SpeechAudio, ProviderError>;
}

#[async_trait]
pub trait TranscriptionProvider: Send + Sync {
    async fn transcribe(&self, audio: &[u8]) -> Result<String, ProviderError>;
}

/// The bound implementation of every capability.
#[derive(Clone)]
pub struct ProviderSet {
    pub vision: Arc<dyn VisionProvider>,
    pub embedding: Arc<dyn EmbeddingProvider>,
    pub chat: Arc<dyn ChatProvider>,
    pub speech: Arc<dyn SpeechProvider>,
    pub transcription: Arc<dyn TranscriptionProvider>,
    embedding_dim: usize,
}

impl fmt::Debug for ProviderSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ProviderSet")
            .field("embedding_dim", &self.embedding_dim)
            .finish_non_exhaustive()
    }
}

impl ProviderSet {
    pub fn new(
        vision: Arc<dyn VisionProvider>,
        embedding: Arc<dyn EmbeddingProvider>,
        chat: Arc<dyn ChatProvider>,
        speech: Arc<dyn SpeechProvider>,
        transcription: Arc<dyn TranscriptionProvider>,
        embedding_dim: usize,
    ) -> Self {
        Self {
            vision,
            embedding,
            chat,
            speech,
            transcription,
            embedding_dim,
        }
    }

    pub fn embedding_dim(&self) -> usize {
        self.embedding_dim
    }

    pub async fn describe_image(&self, req: &VisionRequest) -> Result<String> {
        let text = self.vision.describe_image(req).await?;
        if text.trim().is_empty() {
            return Err(ProviderError::malformed("empty image description").into());
        }
        Ok(text.trim().to_string())
    }

    pub async fn embed_image(&self, req: &VisionRequest) -> Result<Embedding> {
        let e = self.embedding.embed_image(req).await?;
        self.check_embedding(e)
    }

    pub async fn embed_text(&self, text: &str) -> Result<Embedding> {
        if text.is_empty() {
            return Err(Error::usage("cannot embed empty text"));
        }
        let e = self.embedding.embed_text(text).await?;
        self.check_embedding(e)
    }

    pub async fn chat(&self, req: &ChatRequest) -> Result<String> {
        req.validate()?;
        let text = self.chat.chat(req).await?;
        if text.trim().is_empty() {
            return Err(ProviderError::malformed("empty chat completion").into());
        }
        Ok(text)
    }

    pub async fn synthesize_speech(&self, req: &SpeechRequest) -> Result<SpeechAudio> {
        if req.text.trim().is_empty() {
            return Err(Error::usage("speech text must be non-empty"));
        }
        let audio = self.speech.synthesize_speech(req).await?;
        if audio.bytes.is_empty() {
            return Err(ProviderError::malformed("empty audio").into());
        }
        Ok(audio)
    }

    pub async fn transcribe(&self, audio: &[u8]) -> Result<String> {
        if audio.is_empty() {
            return Err(Error::usage("audio must be non-empty"));
        }
        Ok(self.transcription.transcribe(audio).await?)
    }

    fn check_embedding(&self, e: Embedding) -> Result<Embedding> {
        if e.dim() != self.embedding_dim {
            return Err(ProviderError::malformed(format!(
                "embedding has dimension {}, deployment uses {}",
                e.dim(),
                self.embedding_dim
            ))
            .into());
        }
        if e.is_unit(1e-6) {
            Ok(e)
        } else {
            let raw: Vec<f64> = e.values().iter().map(|&v| f64::from(v)).collect();
            Embedding::normalized(&raw)
                .map_err(|_| ProviderError::malformed("degenerate embedding").into())
        }
    }
}

/// Short content tag for a blob: the label of a `tag:<label>\n` header when
/// present (test fixtures), otherwise the first 12 hex digits of its SHA-256.
pub fn content_tag(bytes: &[u8]) -> String {
    if let Some(rest) = bytes.strip_prefix(b"tag:") {
        let end = rest.iter().position(|&b| b == b'\n').unwrap_or(rest.len());
        return String::from_utf8_lossy(&rest[..end]).trim().to_string();
    }
    let digest = Sha256::digest(bytes);
    hex::encode(&digest[..6])
}
