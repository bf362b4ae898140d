//! Core of the portal daemon: gives everyday objects persistent personas with
//! long-term memory and runs the awaken / converse / goodbye ritual.
//!
//! The pieces, bottom up:
//!
//! - [`providers`]: vision, embedding, chat, speech and transcription behind
//!   traits, with live HTTP, deterministic mock and record/replay bindings.
//! - [`identity`]: embedding-based recognition and persona generation.
//! - [`memory`]: per-object episodic memory with history and relevance search.
//! - [`dialogue`]: the two-tier (private thoughts / public reply) turn.
//! - [`ritual`]: the session state machine, light feedback and devices.
//! - [`persistence`]: crash-safe on-disk records.
//! - [`gateway`]: the engine actor, HTTP/SSE server and text REPL.

pub mod clock;
pub mod config;
pub mod dialogue;
pub mod embedding;
pub mod error;
pub mod events;
pub mod gateway;
pub mod identity;
pub mod memory;
pub mod persistence;
pub mod prompts;
pub mod providers;
pub mod ritual;
pub mod transcript;

pub use clock::{Clock, IdGen, Timestamp};
pub use config::DaemonConfig;
pub use dialogue::TwoTierTurn;
pub use embedding::Embedding;
pub use error::{Error, ProviderError, ProviderErrorKind, Result, StorageError};
pub use events::{ApiEvent, Channel, EventKind};
pub use gateway::{Daemon, EngineHandle};
pub use identity::{ObjectProfile, Persona, Threshold};
pub use memory::{MemoryRecord, Speaker};
pub use persistence::SessionLog;
pub use ritual::light::{brightness_at, LightMode, LightPattern};
pub use ritual::{RitualPhase, StepReport};
pub use transcript::{TranscriptEntry, TranscriptSpeaker};
