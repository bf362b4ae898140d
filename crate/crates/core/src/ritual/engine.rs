//! The ritual engine: one session at a time, driven by serialized commands.
//!
//! Every mutating operation takes `&mut self`; the gateway wraps the engine in
//! a single task so the CLI and HTTP front ends share one event queue.

use std::path::PathBuf;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::clock::{strictly_after, Clock, IdGen, Timestamp};
use crate::dialogue::{
    generate_turn, PromptContext, TwoTierTurn, DEFAULT_HISTORY_LIMIT, DEFAULT_RELEVANT_LIMIT,
    DEFAULT_TRANSCRIPT_TAIL,
};
use crate::error::{Error, Result};
use crate::events::{Channel, EventBody, EventHub};
use crate::identity::{IdentityResolver, ObjectProfile, Registry, Threshold};
use crate::memory::{MemoryQuery, MemoryRecord, MemoryStore, Speaker};
use crate::persistence::SessionLog;
use crate::prompts::PromptAssets;
use crate::providers::{ProviderSet, SpeechRequest, VisionRequest};
use crate::transcript::{InnerThoughtsEntry, TranscriptEntry, TranscriptSpeaker};

use super::devices::{AudioSink, CameraSource};
use super::light::{LightController, LightPattern, LightScheme};
use super::{transition, RitualEvent, RitualPhase, Trigger, TriggerWords};

pub const DEFAULT_APOLOGY: &str = "The portal lost the thread for a moment. Please say that again.";

pub fn default_voices() -> Vec<String> {
    ["warm", "familiar", "playful", "gravelly", "whisper"]
        .into_iter()
        .map(String::from)
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RitualConfig {
    pub triggers: TriggerWords,
    pub threshold: Threshold,
    pub voices: Vec<String>,
    pub history_limit: usize,
    pub relevant_limit: usize,
    pub transcript_tail: usize,
    pub light: LightScheme,
    pub apology: String,
}

impl Default for RitualConfig {
    fn default() -> Self {
        Self {
            triggers: TriggerWords::default(),
            threshold: Threshold::default(),
            voices: default_voices(),
            history_limit: DEFAULT_HISTORY_LIMIT,
            relevant_limit: DEFAULT_RELEVANT_LIMIT,
            transcript_tail: DEFAULT_TRANSCRIPT_TAIL,
            light: LightScheme::default(),
            apology: DEFAULT_APOLOGY.into(),
        }
    }
}

/// Everything the engine is wired to.
pub struct EngineDeps {
    pub providers: ProviderSet,
    pub registry: Arc<Registry>,
    pub memory: Arc<MemoryStore>,
    pub prompts: PromptAssets,
    pub clock: Arc<dyn Clock>,
    pub ids: Arc<dyn IdGen>,
    pub camera: Arc<dyn CameraSource>,
    pub audio: Arc<dyn AudioSink>,
    pub light: Arc<LightController>,
    pub hub: Arc<EventHub>,
    pub config: RitualConfig,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RitualSession {
    pub session_id: String,
    pub object: Option<ObjectProfile>,
    pub phase: RitualPhase,
    pub transcript: Vec<TranscriptEntry>,
    pub inner_thoughts: Vec<InnerThoughtsEntry>,
    pub started_at: Timestamp,
    pub ended_at: Option<Timestamp>,
    /// Turns whose human memory was stored.
    pub stored_turns: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectSummary {
    pub object_id: String,
    pub name: String,
    pub description: String,
    pub traits: Vec<String>,
}

impl From<&ObjectProfile> for ObjectSummary {
    fn from(p: &ObjectProfile) -> Self {
        Self {
            object_id: p.object_id.clone(),
            name: p.persona.name.clone(),
            description: p.description.clone(),
            traits: p.persona.traits.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClosedSession {
    pub session_id: String,
    pub log_path: Option<PathBuf>,
    pub summary_ref: Option<String>,
    pub summary_skipped: bool,
    pub aborted: bool,
}

/// What one command did.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct StepReport {
    pub phase: Option<RitualPhase>,
    pub session_id: Option<String>,
    pub appended: Vec<TranscriptEntry>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub inner_thoughts: Vec<InnerThoughtsEntry>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub object: Option<ObjectSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub was_new: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub closed: Option<ClosedSession>,
    /// Set when a turn was skipped because a provider failed.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub skipped: Option<String>,
    /// The command had no effect in the current phase.
    #[serde(default)]
    pub noop: bool,
}

impl StepReport {
    /// Removes everything the participant channel must not see.
    pub fn for_channel(mut self, channel: Channel) -> Self {
        if channel == Channel::Participant {
            self.inner_thoughts.clear();
        }
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionView {
    pub session_id: String,
    pub started_at: Timestamp,
    pub object: Option<ObjectSummary>,
    pub transcript: Vec<TranscriptEntry>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub inner_thoughts: Option<Vec<InnerThoughtsEntry>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateSnapshot {
    pub phase: RitualPhase,
    pub session: Option<SessionView>,
    pub light: LightPattern,
    /// Last event seq on the requesting channel; resume the stream after it.
    pub seq: u64,
}

pub struct RitualEngine {
    deps: EngineDeps,
    resolver: IdentityResolver,
    phase: RitualPhase,
    session: Option<RitualSession>,
}

impl RitualEngine {
    pub fn new(deps: EngineDeps) -> Self {
        let resolver = IdentityResolver {
            providers: deps.providers.clone(),
            registry: deps.registry.clone(),
            threshold: deps.config.threshold,
            clock: deps.clock.clone(),
            ids: deps.ids.clone(),
            persona_template: deps.prompts.persona.clone(),
            voices: deps.config.voices.clone(),
        };
        deps.light.set(deps.config.light.idle, deps.clock.now());
        Self {
            deps,
            resolver,
            phase: RitualPhase::Idle,
            session: None,
        }
    }

    pub fn phase(&self) -> RitualPhase {
        self.phase
    }

    pub fn session(&self) -> Option<&RitualSession> {
        self.session.as_ref()
    }

    pub fn deps(&self) -> &EngineDeps {
        &self.deps
    }

    pub fn snapshot(&self, channel: Channel) -> StateSnapshot {
        let session = self.session.as_ref().map(|s| SessionView {
            session_id: s.session_id.clone(),
            started_at: s.started_at,
            object: s.object.as_ref().map(ObjectSummary::from),
            transcript: s.transcript.clone(),
            inner_thoughts: (channel == Channel::Operator).then(|| s.inner_thoughts.clone()),
        });
        StateSnapshot {
            phase: self.phase,
            session,
            light: self.deps.light.pattern(),
            seq: self.deps.hub.last_seq(channel),
        }
    }

    pub fn objects(&self) -> Vec<ObjectProfile> {
        let mut all = self.deps.registry.all();
        all.sort_by(|a, b| a.created_at.cmp(&b.created_at).then(a.object_id.cmp(&b.object_id)));
        all
    }

    pub async fn memories(&self, query: &MemoryQuery) -> Result<Vec<(MemoryRecord, Option<f64>)>> {
        if !self.deps.registry.contains(&query.object_id) {
            return Err(Error::UnknownObject(query.object_id.clone()));
        }
        self.deps.memory.query(query, &self.deps.providers).await
    }

    /// Starts a session. `image` bypasses the camera. A second awaken while a
    /// session is active does nothing.
    pub async fn awaken(&mut self, image: Option<VisionRequest>) -> Result<StepReport> {
        if self.phase != RitualPhase::Idle {
            tracing::info!(phase = ?self.phase, "awaken ignored: session already active");
            return Ok(self.noop());
        }
        let now = self.deps.clock.now();
        self.session = Some(RitualSession {
            session_id: self.deps.ids.next_id(),
            object: None,
            phase: RitualPhase::Idle,
            transcript: Vec::new(),
            inner_thoughts: Vec::new(),
            started_at: now,
            ended_at: None,
            stored_turns: 0,
        });
        self.apply(RitualEvent::KeywordAwaken);
        let resolved = match image {
            Some(img) => Ok(img),
            None => self.deps.camera.capture().await,
        };
        let resolved = match resolved {
            Ok(img) => self.resolver.resolve(&img).await,
            Err(e) => Err(e),
        };
        let (profile, was_new) = match resolved {
            Ok(ok) => ok,
            Err(e) => {
                self.abort(&e).await;
                return Err(e);
            }
        };
        let session = self.session.as_mut().expect("session exists in Request");
        session.object = Some(profile.clone());
        let summary = ObjectSummary::from(&profile);
        self.deps.hub.publish(EventBody::ObjectBound {
            session_id: session.session_id.clone(),
            object_id: summary.object_id.clone(),
            name: summary.name.clone(),
            description: summary.description.clone(),
            traits: summary.traits.clone(),
            was_new,
        });
        self.apply(RitualEvent::IdentityResolved);
        let mut report = self.report();
        report.object = Some(summary);
        report.was_new = Some(was_new);
        Ok(report)
    }

    /// Routes a human utterance: trigger words drive the ritual, anything
    /// else is a conversation turn.
    pub async fn utterance(&mut self, text: &str) -> Result<StepReport> {
        let text = text.trim();
        if text.is_empty() {
            return Err(Error::usage("utterance must be non-empty"));
        }
        match self.deps.config.triggers.detect(text) {
            Some(Trigger::Awaken) => self.awaken(None).await,
            Some(Trigger::Goodbye) => self.close(Some(text)).await,
            None => self.turn(text).await,
        }
    }

    pub async fn goodbye(&mut self) -> Result<StepReport> {
        self.close(None).await
    }

    /// Transcribes audio and routes the text like a typed utterance. Silence
    /// is ignored.
    pub async fn hear(&mut self, audio: &[u8]) -> Result<StepReport> {
        let text = self.deps.providers.transcribe(audio).await?;
        if text.trim().is_empty() {
            return Ok(self.noop());
        }
        self.utterance(&text).await
    }

    fn noop(&self) -> StepReport {
        StepReport {
            noop: true,
            ..self.report()
        }
    }

    fn report(&self) -> StepReport {
        StepReport {
            phase: Some(self.phase),
            session_id: self.session.as_ref().map(|s| s.session_id.clone()),
            ..Default::default()
        }
    }

    fn apply(&mut self, event: RitualEvent) {
        let next = transition(self.phase, &event);
        if next == self.phase {
            return;
        }
        self.phase = next;
        let session_id = self.session.as_mut().map(|s| {
            s.phase = next;
            s.session_id.clone()
        });
        let scheme = &self.deps.config.light;
        let pattern = match next {
            RitualPhase::Idle => scheme.idle,
            RitualPhase::Request => scheme.request,
            RitualPhase::Conversation => scheme.conversation,
            RitualPhase::Transformation => scheme.transformation,
        };
        self.deps.light.set(pattern, self.deps.clock.now());
        tracing::info!(phase = ?next, "phase changed");
        self.deps.hub.publish(EventBody::PhaseChanged {
            phase: next,
            session_id,
        });
    }

    fn push_entry(&mut self, speaker: TranscriptSpeaker, text: Option<&str>) -> TranscriptEntry {
        let session = self.session.as_mut().expect("active session");
        let at = strictly_after(self.deps.clock.now(), session.transcript.last().map(|e| e.at));
        let entry = match text {
            Some(t) => TranscriptEntry::speech(at, speaker, t),
            None => TranscriptEntry::silence(at),
        };
        session.transcript.push(entry.clone());
        self.deps.hub.publish(EventBody::TranscriptAppended {
            session_id: session.session_id.clone(),
            index: session.transcript.len() - 1,
            entry: entry.clone(),
        });
        entry
    }

    async fn speak(&self, text: &str, voice: &str) -> Result<()> {
        let audio = self
            .deps
            .providers
            .synthesize_speech(&SpeechRequest::new(text, voice)?)
            .await?;
        self.deps.audio.play(&audio).await
    }

    async fn turn(&mut self, text: &str) -> Result<StepReport> {
        if self.phase != RitualPhase::Conversation {
            return Err(Error::NoActiveSession);
        }
        let prior = self.session.as_ref().expect("active session").transcript.clone();
        let mut report = self.report();
        report.appended.push(self.push_entry(TranscriptSpeaker::Human, Some(text)));
        match self.converse(text, &prior).await {
            Ok(turn) => {
                let session = self.session.as_mut().expect("active session");
                let at = session.transcript.last().expect("human entry").at;
                let inner = InnerThoughtsEntry {
                    at,
                    turn: session.inner_thoughts.len() + 1,
                    inner_thoughts: turn.inner_thoughts.clone(),
                    engagement_intent: turn.engagement_intent,
                    speak: turn.speak,
                };
                session.inner_thoughts.push(inner.clone());
                self.deps.hub.publish(EventBody::InnerThoughts {
                    session_id: session.session_id.clone(),
                    entry: inner.clone(),
                });
                report.inner_thoughts.push(inner);
                let reply = turn.speak.then_some(turn.public_response.as_str());
                report.appended.push(self.push_entry(TranscriptSpeaker::Object, reply));
                self.apply(RitualEvent::TurnCompleted);
            }
            Err(e) => {
                tracing::warn!(error = %e, "turn skipped");
                let apology = self.deps.config.apology.clone();
                report.appended.push(self.push_entry(TranscriptSpeaker::Portal, Some(&apology)));
                report.skipped = Some(e.to_string());
            }
        }
        Ok(report)
    }

    async fn converse(&mut self, text: &str, prior: &[TranscriptEntry]) -> Result<TwoTierTurn> {
        let (object_id, session_id, persona) = {
            let s = self.session.as_ref().expect("active session");
            let object = s.object.as_ref().expect("object bound in Conversation");
            (object.object_id.clone(), s.session_id.clone(), object.persona.clone())
        };
        let cfg = &self.deps.config;
        let memory = &self.deps.memory;
        let providers = &self.deps.providers;
        let human = memory
            .store_memory(&object_id, &session_id, Speaker::Human, text, providers)
            .await?;
        self.session.as_mut().expect("active session").stored_turns += 1;
        let mut history = memory.retrieve_history(&object_id, cfg.history_limit + 1)?;
        history.retain(|r| r.memory_id != human.memory_id);
        let excess = history.len().saturating_sub(cfg.history_limit);
        history.drain(..excess);
        let mut relevant = Vec::new();
        if cfg.relevant_limit > 0 {
            relevant = memory
                .retrieve_relevant(&object_id, text, cfg.relevant_limit + 1, providers)
                .await?;
            relevant.retain(|m| m.record.memory_id != human.memory_id);
            relevant.truncate(cfg.relevant_limit);
        }
        let ctx = PromptContext::new(persona.clone(), history, relevant, prior, cfg.transcript_tail, text);
        let turn = generate_turn(&ctx, providers, &self.deps.prompts.dialogue).await?;
        if turn.speak {
            let audio = providers
                .synthesize_speech(&SpeechRequest::new(&turn.public_response, &persona.voice_id)?)
                .await?;
            memory
                .store_memory(&object_id, &session_id, Speaker::Object, &turn.public_response, providers)
                .await?;
            if let Err(e) = self.deps.audio.play(&audio).await {
                tracing::warn!(error = %e, "audio playback failed");
            }
        }
        Ok(turn)
    }

    async fn close(&mut self, said: Option<&str>) -> Result<StepReport> {
        if self.phase != RitualPhase::Conversation {
            return Err(Error::NoActiveSession);
        }
        let mut report = self.report();
        if let Some(text) = said {
            report.appended.push(self.push_entry(TranscriptSpeaker::Human, Some(text)));
        }
        self.apply(RitualEvent::KeywordGoodbye);

        let (object, session_id, stored_turns) = {
            let s = self.session.as_ref().expect("active session");
            (s.object.clone().expect("object bound"), s.session_id.clone(), s.stored_turns)
        };
        let mut summary_ref = None;
        let mut summary_skipped = false;
        if stored_turns > 0 {
            match self
                .deps
                .memory
                .summarize_session(
                    &object.object_id,
                    &session_id,
                    &object.persona.name,
                    &self.deps.prompts.summary,
                    &self.deps.providers,
                )
                .await
            {
                Ok(rec) => summary_ref = Some(rec.memory_id),
                Err(e) => {
                    tracing::warn!(error = %e, "session summary skipped");
                    summary_skipped = true;
                }
            }
        }

        let reflection = self
            .deps
            .prompts
            .reflection
            .render(&[("name", &object.persona.name)]);
        let reflection = reflection.trim().to_string();
        if let Err(e) = self.speak(&reflection, &object.persona.voice_id).await {
            tracing::warn!(error = %e, "reflection prompt not voiced");
        }
        report.appended.push(self.push_entry(TranscriptSpeaker::Portal, Some(&reflection)));

        let closed = self.finish(summary_ref, summary_skipped, false);
        report.phase = Some(self.phase);
        report.closed = Some(closed);
        Ok(report)
    }

    /// Writes the session log and returns to Idle.
    fn finish(&mut self, summary_ref: Option<String>, summary_skipped: bool, aborted: bool) -> ClosedSession {
        let ended_at = {
            let s = self.session.as_ref().expect("active session");
            strictly_after(self.deps.clock.now(), s.transcript.last().map(|e| e.at).or(Some(s.started_at)))
        };
        let session = self.session.as_mut().expect("active session");
        session.ended_at = Some(ended_at);
        let log = SessionLog {
            session_id: session.session_id.clone(),
            object_id: session.object.as_ref().map(|o| o.object_id.clone()),
            started_at: session.started_at,
            ended_at,
            transcript: session.transcript.clone(),
            inner_thoughts: session.inner_thoughts.clone(),
            summary_ref: summary_ref.clone(),
            summary_skipped,
        };
        let log_path = match self.deps.registry.store().write_session_log(&log) {
            Ok(p) => Some(p),
            Err(e) => {
                tracing::error!(error = %e, "session log not written");
                None
            }
        };
        let closed = ClosedSession {
            session_id: log.session_id.clone(),
            log_path,
            summary_ref,
            summary_skipped,
            aborted,
        };
        self.deps.hub.publish(EventBody::SessionClosed {
            session_id: log.session_id,
            object_id: log.object_id,
            summary_ref: closed.summary_ref.clone(),
            summary_skipped,
            aborted,
        });
        if aborted {
            self.apply(RitualEvent::Error("session aborted".into()));
        } else {
            self.apply(RitualEvent::SummaryStored);
        }
        self.session = None;
        closed
    }

    async fn abort(&mut self, error: &Error) {
        tracing::error!(%error, "session aborted");
        self.finish(None, true, true);
    }
}
