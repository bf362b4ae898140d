//! HTTP-backed providers.
//!
//! These target capability-equivalent endpoints rather than any one vendor's
//! exact API: chat and vision speak the common `/chat/completions` shape,
//! embeddings use `/embeddings`, speech posts to `/text-to-speech/{voice}` and
//! transcription posts raw audio to `/audio/transcriptions`. All requests
//! carry a bearer token. Wrap them in [`super::retry::Retrying`] for deadlines
//! and backoff.

use std::fmt;

use async_trait::async_trait;
use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine as _;
use reqwest::StatusCode;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{
    ChatProvider, ChatRequest, ChatRole, EmbeddingProvider, SpeechAudio, SpeechProvider,
    SpeechRequest, TranscriptionProvider, VisionProvider, VisionRequest,
};
use crate::embedding::Embedding;
use crate::error::{ProviderError, ProviderErrorKind};

#[derive(Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Endpoint {
    pub base_url: String,
    #[serde(default)]
    pub model: String,
    /// Filled from the environment, never from config files.
    #[serde(skip)]
    pub token: Option<String>,
}

impl fmt::Debug for Endpoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Endpoint")
            .field("base_url", &self.base_url)
            .field("model", &self.model)
            .field("token", &self.token.as_ref().map(|_| "<redacted>"))
            .finish()
    }
}

#[derive(Debug, Clone)]
struct Http {
    client: reqwest::Client,
    endpoint: Endpoint,
}

impl Http {
    fn new(endpoint: Endpoint) -> Self {
        Self {
            client: reqwest::Client::new(),
            endpoint,
        }
    }

    fn url(&self, path: &str) -> String {
        format!("{}/{}", self.endpoint.base_url.trim_end_matches('/'), path)
    }

    fn auth(&self, rb: reqwest::RequestBuilder) -> reqwest::RequestBuilder {
        match &self.endpoint.token {
            Some(t) => rb.bearer_auth(t),
            None => rb,
        }
    }

    async fn send(&self, rb: reqwest::RequestBuilder) -> Result<reqwest::Response, ProviderError> {
        let resp = self.auth(rb).send().await.map_err(transport_error)?;
        let status = resp.status();
        if status.is_success() {
            return Ok(resp);
        }
        let body = resp.text().await.unwrap_or_default();
        Err(status_error(status, body))
    }

    async fn post_json(&self, path: &str, body: &Value) -> Result<Value, ProviderError> {
        let resp = self.send(self.client.post(self.url(path)).json(body)).await?;
        resp.json::<Value>()
            .await
            .map_err(|e| ProviderError::malformed(format!("response body: {e}")))
    }
}

fn transport_error(e: reqwest::Error) -> ProviderError {
    if e.is_timeout() {
        ProviderError::timeout(e.to_string())
    } else if e.is_decode() {
        ProviderError::malformed(e.to_string())
    } else {
        ProviderError::unavailable(e.to_string())
    }
}

fn status_error(status: StatusCode, body: String) -> ProviderError {
    let kind = match status {
        StatusCode::UNAUTHORIZED | StatusCode::FORBIDDEN => ProviderErrorKind::AuthFailure,
        StatusCode::TOO_MANY_REQUESTS => ProviderErrorKind::RateLimited,
        StatusCode::REQUEST_TIMEOUT | StatusCode::GATEWAY_TIMEOUT => ProviderErrorKind::Timeout,
        s if s.is_server_error() => ProviderErrorKind::Unavailable,
        _ => ProviderErrorKind::MalformedResponse,
    };
    let mut detail = format!("HTTP {status}");
    if !body.is_empty() {
        detail.push_str(": ");
        detail.extend(body.chars().take(200));
    }
    ProviderError::new(kind, detail)
}

fn completion_text(v: &Value) -> Result<String, ProviderError> {
    let text = v
        .pointer("/choices/0/message/content")
        .and_then(Value::as_str)
        .ok_or_else(|| ProviderError::malformed("completion has no choices[0].message.content"))?;
    if text.trim().is_empty() {
        return Err(ProviderError::malformed("empty completion"));
    }
    Ok(text.to_string())
}

fn embedding_values(v: &Value) -> Result<Embedding, ProviderError> {
    let arr = v
        .pointer("/data/0/embedding")
        .and_then(Value::as_array)
        .ok_or_else(|| ProviderError::malformed("no data[0].embedding"))?;
    let raw: Option<Vec<f64>> = arr.iter().map(Value::as_f64).collect();
    let raw = raw.ok_or_else(|| ProviderError::malformed("non-numeric embedding"))?;
    Embedding::normalized(&raw).map_err(|e| ProviderError::malformed(e.to_string()))
}

fn data_uri(req: &VisionRequest) -> String {
    format!(
        "data:{};base64,{}",
        req.mime_type().as_str(),
        B64.encode(req.image_bytes())
    )
}

/// Fallback when a speech response carries no duration information.
const ESTIMATED_MS_PER_CHAR: u64 = 60;

const DESCRIBE_INSTRUCTION: &str = "Describe the single object in this photograph in one \
sentence, noting its material, colour, wear and any distinctive details.";

#[derive(Debug, Clone)]
pub struct LiveVision(Http);

impl LiveVision {
    pub fn new(endpoint: Endpoint) -> Self {
        Self(Http::new(endpoint))
    }
}

#[async_trait]
impl VisionProvider for LiveVision {
    async fn describe_image(&self, req: &VisionRequest) -> Result<String, ProviderError> {
        let body = json!({
            "model": self.0.endpoint.model,
            "messages": [{
                "role": "user",
                "content": [
                    {"type": "text", "text": DESCRIBE_INSTRUCTION},
                    {"type": "image_url", "image_url": {"url": data_uri(req)}},
                ],
            }],
        });
        completion_text(&self.0.post_json("chat/completions", &body).await?)
    }
}

#[derive(Debug, Clone)]
pub struct LiveEmbedding(Http);

impl LiveEmbedding {
    pub fn new(endpoint: Endpoint) -> Self {
        Self(Http::new(endpoint))
    }
}

#[async_trait]
impl EmbeddingProvider for LiveEmbedding {
    async fn embed_image(&self, req: &VisionRequest) -> Result<Embedding, ProviderError> {
        let body = json!({
            "model": self.0.endpoint.model,
            "input": [{"type": "image", "mime_type": req.mime_type().as_str(),
                       "data": B64.encode(req.image_bytes())}],
        });
        embedding_values(&self.0.post_json("embeddings", &body).await?)
    }

    async fn embed_text(&self, text: &str) -> Result<Embedding, ProviderError> {
        let body = json!({"model": self.0.endpoint.model, "input": text});
        embedding_values(&self.0.post_json("embeddings", &body).await?)
    }
}

#[derive(Debug, Clone)]
pub struct LiveChat(Http);

impl LiveChat {
    pub fn new(endpoint: Endpoint) -> Self {
        Self(Http::new(endpoint))
    }
}

#[async_trait]
impl ChatProvider for LiveChat {
    async fn chat(&self, req: &ChatRequest) -> Result<String, ProviderError> {
        let mut messages = vec![json!({"role": "system", "content": req.system_prompt})];
        messages.extend(req.messages.iter().map(|m| {
            let role = match m.role {
                ChatRole::System => "system",
                ChatRole::User => "user",
                ChatRole::Assistant => "assistant",
            };
            json!({"role": role, "content": m.text})
        }));
        let body = json!({"model": self.0.endpoint.model, "messages": messages});
        completion_text(&self.0.post_json("chat/completions", &body).await?)
    }
}

#[derive(Debug, Clone)]
pub struct LiveSpeech(Http);

impl LiveSpeech {
    pub fn new(endpoint: Endpoint) -> Self {
        Self(Http::new(endpoint))
    }
}

/// Duration of a PCM WAV payload, if `bytes` is one.
pub fn wav_duration_ms(bytes: &[u8]) -> Option<u64> {
    if bytes.len() < 44 || &bytes[..4] != b"RIFF" || &bytes[8..12] != b"WAVE" {
        return None;
    }
    let byte_rate = u32::from_le_bytes(bytes[28..32].try_into().ok()?);
    let data_len = u32::from_le_bytes(bytes[40..44].try_into().ok()?);
    if byte_rate == 0 {
        return None;
    }
    Some(u64::from(data_len) * 1000 / u64::from(byte_rate))
}

#[async_trait]
impl SpeechProvider for LiveSpeech {
    async fn synthesize_speech(&self, req: &SpeechRequest) -> Result<SpeechAudio, ProviderError> {
        let body = json!({"text": req.text, "model_id": req.engine_tag});
        let path = format!("text-to-speech/{}", req.voice_id);
        let resp = self.0.send(self.0.client.post(self.0.url(&path)).json(&body)).await?;
        let header_ms = resp
            .headers()
            .get("x-audio-duration-ms")
            .and_then(|v| v.to_str().ok())
            .and_then(|v| v.parse::<u64>().ok());
        let bytes = resp.bytes().await.map_err(transport_error)?.to_vec();
        if bytes.is_empty() {
            return Err(ProviderError::malformed("empty audio"));
        }
        let duration_ms = header_ms
            .or_else(|| wav_duration_ms(&bytes))
            .unwrap_or(req.text.chars().count() as u64 * ESTIMATED_MS_PER_CHAR);
        Ok(SpeechAudio { bytes, duration_ms })
    }
}

#[derive(Debug, Clone)]
pub struct LiveTranscription(Http);

impl LiveTranscription {
    pub fn new(endpoint: Endpoint) -> Self {
        Self(Http::new(endpoint))
    }
}

#[async_trait]
impl TranscriptionProvider for LiveTranscription {
    async fn transcribe(&self, audio: &[u8]) -> Result<String, ProviderError> {
        let mut url = self.0.url("audio/transcriptions");
        if !self.0.endpoint.model.is_empty() {
            url = format!("{url}?model={}", self.0.endpoint.model);
        }
        let rb = self
            .0
            .client
            .post(url)
            .header(reqwest::header::CONTENT_TYPE, "audio/wav")
            .body(audio.to_vec());
        let v: Value = self
            .0
            .send(rb)
            .await?
            .json()
            .await
            .map_err(|e| ProviderError::malformed(format!("response body: {e}")))?;
        v.get("text")
            .and_then(Value::as_str)
            .map(|s| s.trim().to_string())
            .ok_or_else(|| ProviderError::malformed("transcription has no text field"))
    }
}
