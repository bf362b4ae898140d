//! Session transcript entries shared by the ritual engine, dialogue prompts
//! and session logs.

use serde::{Deserialize, Serialize};

use crate::clock::Timestamp;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TranscriptSpeaker {
    Human,
    Object,
    /// The installation itself (reflection prompt, apologies).
    Portal,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum TranscriptContent {
    Speech { text: String },
    /// The object chose not to answer.
    Silence,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TranscriptEntry {
    pub at: Timestamp,
    pub speaker: TranscriptSpeaker,
    #[serde(flatten)]
    pub content: TranscriptContent,
}

impl TranscriptEntry {
    pub fn speech(at: Timestamp, speaker: TranscriptSpeaker, text: impl Into<String>) -> Self {
        Self {
            at,
            speaker,
            content: TranscriptContent::Speech { text: text.into() },
        }
    }

    pub fn silence(at: Timestamp) -> Self {
        Self {
            at,
            speaker: TranscriptSpeaker::Object,
            content: TranscriptContent::Silence,
        }
    }

    pub fn text(&self) -> Option<&str> {
        match &self.content {
            TranscriptContent::Speech { text } => Some(text),
            TranscriptContent::Silence => None,
        }
    }

    pub fn is_silence(&self) -> bool {
        matches!(self.content, TranscriptContent::Silence)
    }
}

/// Operator-channel record of one turn's covert tier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InnerThoughtsEntry {
    pub at: Timestamp,
    pub turn: usize,
    pub inner_thoughts: String,
    pub engagement_intent: f64,
    pub speak: bool,
}
