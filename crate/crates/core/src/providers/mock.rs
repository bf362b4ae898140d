//! Deterministic offline providers.
//!
//! Every mock is a pure function of its inputs plus explicit script state, so
//! two runs fed identical inputs and scripts produce byte-identical outputs.

use std::collections::{HashMap, VecDeque};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

use async_trait::async_trait;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use sha2::{Digest, Sha256};

use super::{
    content_tag, ChatProvider, ChatRequest, EmbeddingProvider, ProviderSet, ResponseSchema,
    SpeechAudio, SpeechProvider, SpeechRequest, TranscriptionProvider, VisionProvider,
    VisionRequest,
};
use crate::embedding::Embedding;
use crate::error::ProviderError;

/// Unit vector whose direction is drawn from a ChaCha stream seeded by
/// SHA-256 of `domain || 0 || bytes`. Gaussian components make the direction
/// uniform on the sphere, so unrelated inputs are near-orthogonal.
pub fn hash_unit_vector(domain: &str, bytes: &[u8], dim: usize) -> Embedding {
    let mut h = Sha256::new();
    h.update(domain.as_bytes());
    h.update([0u8]);
    h.update(bytes);
    let seed: [u8; 32] = h.finalize().into();
    let mut rng = ChaCha8Rng::from_seed(seed);
    let raw: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();
    Embedding::normalized(&raw).expect("gaussian draw is non-zero")
}

fn digest_u64(parts: &[&[u8]]) -> u64 {
    let mut h = Sha256::new();
    for p in parts {
        h.update(p);
    }
    let d = h.finalize();
    u64::from_le_bytes(d[..8].try_into().unwrap())
}

#[derive(Debug, Default)]
pub struct MockVision {
    descriptions: HashMap<String, String>,
    calls: AtomicUsize,
}

impl MockVision {
    pub fn new() -> Self {
        Self::default()
    }

    /// Overrides the description returned for images with content tag `tag`.
    pub fn with_description(mut self, tag: impl Into<String>, text: impl Into<String>) -> Self {
        self.descriptions.insert(tag.into(), text.into());
        self
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

#[async_trait]
impl VisionProvider for MockVision {
    async fn describe_image(&self, req: &VisionRequest) -> Result<String, ProviderError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        let tag = content_tag(req.image_bytes());
        Ok(self
            .descriptions
            .get(&tag)
            .cloned()
            .unwrap_or_else(|| format!("mock object {tag}")))
    }
}

#[derive(Debug)]
pub struct MockEmbedding {
    dim: usize,
    calls: AtomicUsize,
}

impl MockEmbedding {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            calls: AtomicUsize::new(0),
        }
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }

    pub fn image_vector(&self, bytes: &[u8]) -> Embedding {
        hash_unit_vector("image", bytes, self.dim)
    }

    pub fn text_vector(&self, text: &str) -> Embedding {
        hash_unit_vector("text", text.as_bytes(), self.dim)
    }
}

#[async_trait]
impl EmbeddingProvider for MockEmbedding {
    async fn embed_image(&self, req: &VisionRequest) -> Result<Embedding, ProviderError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        Ok(self.image_vector(req.image_bytes()))
    }

    async fn embed_text(&self, text: &str) -> Result<Embedding, ProviderError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        Ok(self.text_vector(text))
    }
}

/// Replies generated from the request itself when no script is queued.
#[derive(Debug, Clone)]
pub struct CannedReplies {
    voices: Vec<String>,
}

const NAMES: &[&str] = &[
    "Murmur", "Tamsin", "Bramble", "Oriel", "Pip", "Sorrel", "Wren", "Quill",
];
const TRAITS: &[&str] = &[
    "patient", "curious", "wistful", "playful", "stubborn", "gentle", "observant", "proud",
    "shy",
];
const STYLES: &[&str] = &[
    "speaks slowly, in short warm sentences",
    "chatters in bright, quick bursts",
    "answers with quiet questions of its own",
];

impl CannedReplies {
    pub fn new(voices: Vec<String>) -> Self {
        let voices = if voices.is_empty() {
            vec!["warm".to_string()]
        } else {
            voices
        };
        Self { voices }
    }

    pub fn reply(&self, req: &ChatRequest) -> String {
        let last = req.last_user_text().unwrap_or("");
        let h = digest_u64(&[req.system_prompt.as_bytes(), last.as_bytes()]);
        match req.response_schema {
            ResponseSchema::PersonaSheet => {
                let pick = |list: &[&'static str], salt: u64| -> &'static str {
                    list[((h >> salt) % list.len() as u64) as usize]
                };
                let mut traits: Vec<&str> = Vec::new();
                for salt in [3u64, 11, 19, 27, 35] {
                    let t = pick(TRAITS, salt);
                    if !traits.contains(&t) {
                        traits.push(t);
                    }
                    if traits.len() == 3 {
                        break;
                    }
                }
                for t in TRAITS {
                    if traits.len() == 3 {
                        break;
                    }
                    if !traits.contains(t) {
                        traits.push(t);
                    }
                }
                let voice = &self.voices[(h % self.voices.len() as u64) as usize];
                serde_json::json!({
                    "name": pick(NAMES, 0),
                    "traits": traits,
                    "speaking_style": pick(STYLES, 7),
                    "backstory": "It has waited on a shelf for a long time, listening.",
                    "voice_id": voice,
                    "mood_seed": format!("mood-{:04x}", h & 0xffff),
                })
                .to_string()
            }
            ResponseSchema::TwoTierTurn => {
                let heard = one_line(last, 80);
                format!(
                    "INNER: They said \"{heard}\". I feel noticed and want to answer.\n\
                     INTENT: 0.8\nSPEAK: yes\nRESPONSE: I heard you say \"{heard}\". I am still here with you."
                )
            }
            ResponseSchema::FreeText => format!("we spoke of {}", one_line(last, 60)),
        }
    }
}

fn one_line(s: &str, max_chars: usize) -> String {
    let flat: String = s.split_whitespace().collect::<Vec<_>>().join(" ");
    flat.chars().take(max_chars).collect()
}

/// Chat stand-in that pops scripted replies in order and records every
/// request it receives. With an empty script it reports `Unavailable`, unless
/// built with [`MockChat::canned`].
#[derive(Debug, Default)]
pub struct MockChat {
    script: Mutex<VecDeque<String>>,
    requests: Mutex<Vec<ChatRequest>>,
    canned: Option<CannedReplies>,
}

impl MockChat {
    pub fn scripted<I, S>(replies: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Self {
            script: Mutex::new(replies.into_iter().map(Into::into).collect()),
            ..Self::default()
        }
    }

    pub fn canned(voices: Vec<String>) -> Self {
        Self {
            canned: Some(CannedReplies::new(voices)),
            ..Self::default()
        }
    }

    pub fn push(&self, reply: impl Into<String>) {
        self.script.lock().unwrap().push_back(reply.into());
    }

    pub fn remaining(&self) -> usize {
        self.script.lock().unwrap().len()
    }

    pub fn calls(&self) -> usize {
        self.requests.lock().unwrap().len()
    }

    pub fn requests(&self) -> Vec<ChatRequest> {
        self.requests.lock().unwrap().clone()
    }
}

#[async_trait]
impl ChatProvider for MockChat {
    async fn chat(&self, req: &ChatRequest) -> Result<String, ProviderError> {
        self.requests.lock().unwrap().push(req.clone());
        if let Some(next) = self.script.lock().unwrap().pop_front() {
            return Ok(next);
        }
        match &self.canned {
            Some(c) => Ok(c.reply(req)),
            None => Err(ProviderError::unavailable("mock chat script exhausted")),
        }
    }
}

pub const MOCK_SAMPLE_RATE: u32 = 16_000;
pub const MOCK_MS_PER_CHAR: u64 = 10;

/// 44-byte canonical WAV header for mono 16-bit PCM.
pub fn wav_header(sample_rate: u32, data_len: u32) -> Vec<u8> {
    let mut h = Vec::with_capacity(44);
    h.extend_from_slice(b"RIFF");
    h.extend_from_slice(&(36 + data_len).to_le_bytes());
    h.extend_from_slice(b"WAVEfmt ");
    h.extend_from_slice(&16u32.to_le_bytes());
    h.extend_from_slice(&1u16.to_le_bytes());
    h.extend_from_slice(&1u16.to_le_bytes());
    h.extend_from_slice(&sample_rate.to_le_bytes());
    h.extend_from_slice(&(sample_rate * 2).to_le_bytes());
    h.extend_from_slice(&2u16.to_le_bytes());
    h.extend_from_slice(&16u16.to_le_bytes());
    h.extend_from_slice(b"data");
    h.extend_from_slice(&data_len.to_le_bytes());
    h
}

/// Silence of 10 ms per character of text, wrapped in a WAV header.
#[derive(Debug, Default)]
pub struct MockSpeech {
    requests: Mutex<Vec<SpeechRequest>>,
}

impl MockSpeech {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn calls(&self) -> usize {
        self.requests.lock().unwrap().len()
    }

    pub fn requests(&self) -> Vec<SpeechRequest> {
        self.requests.lock().unwrap().clone()
    }
}

#[async_trait]
impl SpeechProvider for MockSpeech {
    async fn synthesize_speech(&self, req: &SpeechRequest) -> Result<SpeechAudio, ProviderError> {
        self.requests.lock().unwrap().push(req.clone());
        let duration_ms = req.text.chars().count() as u64 * MOCK_MS_PER_CHAR;
        let samples = duration_ms * u64::from(MOCK_SAMPLE_RATE) / 1000;
        let data_len = (samples * 2) as u32;
        let mut bytes = wav_header(MOCK_SAMPLE_RATE, data_len);
        bytes.resize(bytes.len() + data_len as usize, 0);
        Ok(SpeechAudio { bytes, duration_ms })
    }
}

/// Maps tagged audio fixtures to fixed transcripts.
#[derive(Debug)]
pub struct MockTranscription {
    fixtures: HashMap<String, String>,
    calls: AtomicUsize,
}

impl Default for MockTranscription {
    fn default() -> Self {
        Self::new()
            .with_fixture("awaken.wav", "awaken")
            .with_fixture("goodbye.wav", "goodbye")
            .with_fixture("silence.wav", "")
    }
}

impl MockTranscription {
    /// A transcriber with no fixtures at all.
    pub fn new() -> Self {
        Self {
            fixtures: HashMap::new(),
            calls: AtomicUsize::new(0),
        }
    }

    pub fn with_fixture(mut self, tag: impl Into<String>, transcript: impl Into<String>) -> Self {
        self.fixtures.insert(tag.into(), transcript.into());
        self
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

#[async_trait]
impl TranscriptionProvider for MockTranscription {
    async fn transcribe(&self, audio: &[u8]) -> Result<String, ProviderError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        let tag = content_tag(audio);
        self.fixtures
            .get(&tag)
            .cloned()
            .ok_or_else(|| ProviderError::unavailable(format!("no transcript fixture for {tag}")))
    }
}

/// Handles to every mock in a [`ProviderSet`], for inspection in tests.
#[derive(Clone)]
pub struct Mocks {
    pub vision: Arc<MockVision>,
    pub embedding: Arc<MockEmbedding>,
    pub chat: Arc<MockChat>,
    pub speech: Arc<MockSpeech>,
    pub transcription: Arc<MockTranscription>,
}

impl Mocks {
    pub fn new(chat: MockChat, dim: usize) -> Self {
        Self {
            vision: Arc::new(MockVision::new()),
            embedding: Arc::new(MockEmbedding::new(dim)),
            chat: Arc::new(chat),
            speech: Arc::new(MockSpeech::new()),
            transcription: Arc::new(MockTranscription::default()),
        }
    }

    pub fn with_vision(mut self, vision: MockVision) -> Self {
        self.vision = Arc::new(vision);
        self
    }

    pub fn provider_set(&self) -> ProviderSet {
        ProviderSet::new(
            self.vision.clone(),
            self.embedding.clone(),
            self.chat.clone(),
            self.speech.clone(),
            self.transcription.clone(),
            self.embedding.dim,
        )
    }
}
