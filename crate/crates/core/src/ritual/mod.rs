//! The three-part ritual: Request, Conversation, Transformation.

pub mod devices;
pub mod engine;
pub mod light;

use serde::{Deserialize, Serialize};

pub use engine::{EngineDeps, RitualConfig, RitualEngine, RitualSession, StateSnapshot, StepReport};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RitualPhase {
    Idle,
    Request,
    Conversation,
    Transformation,
}

impl RitualPhase {
    pub const ALL: [RitualPhase; 4] = [
        RitualPhase::Idle,
        RitualPhase::Request,
        RitualPhase::Conversation,
        RitualPhase::Transformation,
    ];
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RitualEvent {
    KeywordAwaken,
    KeywordGoodbye,
    IdentityResolved,
    TurnCompleted,
    SummaryStored,
    Utterance(String),
    Error(String),
}

impl RitualEvent {
    /// One representative of every event kind, for exhaustive enumeration.
    pub fn representatives() -> Vec<RitualEvent> {
        vec![
            RitualEvent::KeywordAwaken,
            RitualEvent::KeywordGoodbye,
            RitualEvent::IdentityResolved,
            RitualEvent::TurnCompleted,
            RitualEvent::SummaryStored,
            RitualEvent::Utterance("hello".into()),
            RitualEvent::Error("failure".into()),
        ]
    }
}

/// Total transition function. Pairs not listed are no-ops.
pub fn transition(phase: RitualPhase, event: &RitualEvent) -> RitualPhase {
    use RitualEvent as E;
    use RitualPhase as P;
    match (phase, event) {
        (_, E::Error(_)) => P::Idle,
        (P::Idle, E::KeywordAwaken) => P::Request,
        (P::Request, E::IdentityResolved) => P::Conversation,
        (P::Conversation, E::KeywordGoodbye) => P::Transformation,
        (P::Transformation, E::SummaryStored) => P::Idle,
        (p, _) => p,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Trigger {
    Awaken,
    Goodbye,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TriggerWords {
    pub awaken: String,
    pub goodbye: String,
}

impl Default for TriggerWords {
    fn default() -> Self {
        Self {
            awaken: "awaken".into(),
            goodbye: "goodbye".into(),
        }
    }
}

impl TriggerWords {
    /// Whole-word, case-insensitive. Goodbye wins when both words occur.
    pub fn detect(&self, text: &str) -> Option<Trigger> {
        let has = |word: &str| {
            let word = word.to_lowercase();
            !word.is_empty()
                && text
                    .split(|c: char| !c.is_alphanumeric() && c != '\'')
                    .any(|w| w.trim_matches('\'').to_lowercase() == word)
        };
        if has(&self.goodbye) {
            Some(Trigger::Goodbye)
        } else if has(&self.awaken) {
            Some(Trigger::Awaken)
        } else {
            None
        }
    }
}

/// Keyword detection with the default trigger words.
pub fn detect_keyword(text: &str) -> Option<Trigger> {
    TriggerWords::default().detect(text)
}
