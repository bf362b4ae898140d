//! Two-tier turn generation.
//!
//! One chat call returns both tiers in a sectioned grammar:
//!
//! ```text
//! INNER: <private self-reflection, motivation>
//! INTENT: <engagement intent, a number in [0, 1]>
//! SPEAK: yes | no
//! RESPONSE: <what the object says aloud; empty when SPEAK is no>
//! ```
//!
//! Each marker starts a line and appears exactly once; a section's value runs
//! until the next marker line. The `SPEAK` flag decides whether the object
//! talks; `INTENT` is recorded but never thresholded.

use serde::{Deserialize, Serialize};

use crate::error::{Error, ProviderError, ProviderErrorKind, Result};
use crate::identity::Persona;
use crate::memory::{MemoryRecord, ScoredMemory, Speaker};
use crate::prompts::Template;
use crate::providers::{ChatMessage, ChatRequest, ProviderSet, ResponseSchema};
use crate::transcript::{TranscriptEntry, TranscriptSpeaker};

pub const DEFAULT_HISTORY_LIMIT: usize = 6;
pub const DEFAULT_RELEVANT_LIMIT: usize = 4;
pub const DEFAULT_TRANSCRIPT_TAIL: usize = 12;

const NO_MEMORIES: &str = "(no memories yet)";
const NO_TRANSCRIPT: &str = "(the conversation is just beginning)";

/// Output grammar instructions inserted at `{format}` in the dialogue prompt.
pub const FORMAT_INSTRUCTIONS: &str = "Answer in exactly this format, with each marker at the \
start of its own line:
INNER: your private thoughts (self-reflection, motivation, whether you want to engage)
INTENT: a number from 0 to 1 for how much you want to engage
SPEAK: yes or no
RESPONSE: what you say aloud, in character (leave empty if SPEAK is no)";

const CORRECTION: &str = "Your reply did not follow the required format. Reply again using \
exactly the four markers INNER:, INTENT:, SPEAK:, RESPONSE:, each once, each at the start of a \
line. If SPEAK is no, RESPONSE must be empty; if SPEAK is yes, RESPONSE must not be empty.";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TwoTierTurn {
    pub inner_thoughts: String,
    pub engagement_intent: f64,
    pub speak: bool,
    pub public_response: String,
}

impl TwoTierTurn {
    pub fn new(
        inner_thoughts: impl Into<String>,
        engagement_intent: f64,
        speak: bool,
        public_response: impl Into<String>,
    ) -> Result<Self, ProviderError> {
        let turn = Self {
            inner_thoughts: inner_thoughts.into(),
            engagement_intent,
            speak,
            public_response: public_response.into(),
        };
        turn.check()?;
        Ok(turn)
    }

    fn check(&self) -> Result<(), ProviderError> {
        if !(0.0..=1.0).contains(&self.engagement_intent) {
            return Err(ProviderError::malformed(format!(
                "engagement intent {} outside [0, 1]",
                self.engagement_intent
            )));
        }
        if self.speak && self.public_response.is_empty() {
            return Err(ProviderError::malformed("SPEAK is yes but RESPONSE is empty"));
        }
        if !self.speak && !self.public_response.is_empty() {
            return Err(ProviderError::malformed("SPEAK is no but RESPONSE is not empty"));
        }
        Ok(())
    }

    /// Renders the turn in the output grammar; `parse_two_tier` inverts it.
    pub fn format(&self) -> String {
        format!(
            "INNER: {}\nINTENT: {}\nSPEAK: {}\nRESPONSE: {}",
            self.inner_thoughts,
            self.engagement_intent,
            if self.speak { "yes" } else { "no" },
            self.public_response
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Section {
    Inner,
    Intent,
    Speak,
    Response,
}

const MARKERS: [(&str, Section); 4] = [
    ("INNER:", Section::Inner),
    ("INTENT:", Section::Intent),
    ("SPEAK:", Section::Speak),
    ("RESPONSE:", Section::Response),
];

fn marker(line: &str) -> Option<(Section, &str)> {
    let t = line.trim_start();
    MARKERS.iter().find_map(|(m, s)| {
        t.get(..m.len())
            .filter(|head| head.eq_ignore_ascii_case(m))
            .map(|_| (*s, &t[m.len()..]))
    })
}

pub fn parse_two_tier(raw: &str) -> Result<TwoTierTurn, ProviderError> {
    let mut values: [Option<String>; 4] = Default::default();
    let mut current: Option<usize> = None;
    for line in raw.trim().lines() {
        if let Some((section, rest)) = marker(line) {
            let idx = section as usize;
            if values[idx].is_some() {
                return Err(ProviderError::malformed(format!("duplicate {section:?} section")));
            }
            values[idx] = Some(rest.to_string());
            current = Some(idx);
        } else if let Some(idx) = current {
            let v = values[idx].as_mut().expect("current section is set");
            v.push('\n');
            v.push_str(line);
        } else if !line.trim().is_empty() {
            return Err(ProviderError::malformed("text before the first section marker"));
        }
    }
    let take = |s: Section| -> Result<String, ProviderError> {
        values[s as usize]
            .as_deref()
            .map(|v| v.trim().to_string())
            .ok_or_else(|| ProviderError::malformed(format!("missing {s:?} section")))
    };
    let inner = take(Section::Inner)?;
    let intent_text = take(Section::Intent)?;
    let intent: f64 = intent_text
        .parse()
        .ok()
        .filter(|v: &f64| v.is_finite())
        .ok_or_else(|| ProviderError::malformed(format!("INTENT {intent_text:?} is not a number")))?;
    let speak = match take(Section::Speak)?.to_ascii_lowercase().as_str() {
        "yes" | "true" => true,
        "no" | "false" => false,
        other => {
            return Err(ProviderError::malformed(format!("SPEAK {other:?} is not yes/no")));
        }
    };
    TwoTierTurn::new(inner, intent, speak, take(Section::Response)?)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PromptContext {
    pub persona: Persona,
    /// Oldest first.
    pub history_window: Vec<MemoryRecord>,
    pub relevant_memories: Vec<ScoredMemory>,
    transcript_tail: Vec<TranscriptEntry>,
    pub human_utterance: String,
}

impl PromptContext {
    /// Keeps only the last `tail_len` transcript entries.
    pub fn new(
        persona: Persona,
        mut history_window: Vec<MemoryRecord>,
        relevant_memories: Vec<ScoredMemory>,
        transcript: &[TranscriptEntry],
        tail_len: usize,
        human_utterance: impl Into<String>,
    ) -> Self {
        history_window.sort_by_key(|r| r.created_at);
        let start = transcript.len().saturating_sub(tail_len);
        Self {
            persona,
            history_window,
            relevant_memories,
            transcript_tail: transcript[start..].to_vec(),
            human_utterance: human_utterance.into(),
        }
    }

    pub fn transcript_tail(&self) -> &[TranscriptEntry] {
        &self.transcript_tail
    }
}

fn speaker_label(s: Speaker, name: &str) -> &str {
    match s {
        Speaker::Human => "Visitor",
        Speaker::Object => name,
    }
}

fn memory_block<'a, I>(lines: I) -> String
where
    I: Iterator<Item = String> + 'a,
{
    let out: Vec<String> = lines.collect();
    if out.is_empty() {
        NO_MEMORIES.to_string()
    } else {
        out.join("\n")
    }
}

/// Pure function of the context: the same context always yields the same
/// request.
pub fn compose_prompt(ctx: &PromptContext, template: &Template) -> ChatRequest {
    let name = ctx.persona.name.as_str();
    let history = memory_block(ctx.history_window.iter().map(|r| {
        format!(
            "- [{}] {}: {}",
            r.created_at.format("%Y-%m-%d %H:%M"),
            speaker_label(r.speaker, name),
            r.text
        )
    }));
    let relevant = memory_block(ctx.relevant_memories.iter().map(|m| {
        format!(
            "- ({:.2}) {}: {}",
            m.score,
            speaker_label(m.record.speaker, name),
            m.record.text
        )
    }));
    let transcript = if ctx.transcript_tail.is_empty() {
        NO_TRANSCRIPT.to_string()
    } else {
        ctx.transcript_tail
            .iter()
            .map(|e| {
                let who = match e.speaker {
                    TranscriptSpeaker::Human => "Visitor",
                    TranscriptSpeaker::Object => name,
                    TranscriptSpeaker::Portal => "Portal",
                };
                match e.text() {
                    Some(t) => format!("{who}: {t}"),
                    None => format!("{who}: (stays silent)"),
                }
            })
            .collect::<Vec<_>>()
            .join("\n")
    };
    let traits = ctx.persona.traits.join(", ");
    let system_prompt = template.render(&[
        ("name", name),
        ("traits", &traits),
        ("speaking_style", &ctx.persona.speaking_style),
        ("backstory", &ctx.persona.backstory),
        ("mood_seed", &ctx.persona.mood_seed),
        ("history", &history),
        ("relevant", &relevant),
        ("transcript", &transcript),
        ("format", FORMAT_INSTRUCTIONS),
    ]);
    ChatRequest {
        system_prompt,
        messages: vec![ChatMessage::user(ctx.human_utterance.clone())],
        response_schema: ResponseSchema::TwoTierTurn,
    }
}

/// compose -> chat -> parse, with one corrective re-ask on malformed output.
pub async fn generate_turn(
    ctx: &PromptContext,
    providers: &ProviderSet,
    template: &Template,
) -> Result<TwoTierTurn> {
    let mut req = compose_prompt(ctx, template);
    let raw = providers.chat(&req).await?;
    match parse_two_tier(&raw) {
        Ok(turn) => Ok(turn),
        Err(first) => {
            tracing::warn!(error = %first, "malformed two-tier reply, re-asking");
            req.messages.push(ChatMessage::assistant(raw));
            req.messages.push(ChatMessage::user(CORRECTION));
            let raw = providers.chat(&req).await?;
            parse_two_tier(&raw).map_err(|e| {
                Error::Provider(ProviderError::new(
                    ProviderErrorKind::MalformedResponse,
                    format!("after re-ask: {}", e.detail),
                ))
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clock::{Clock, StepClock};
    use crate::embedding::Embedding;
    use crate::prompts::PromptAssets;
    use crate::providers::mock::{MockChat, Mocks};
    use proptest::prelude::*;

    fn persona() -> Persona {
        Persona {
            name: "Murmur".into(),
            traits: vec!["patient".into(), "chipped".into(), "loyal".into()],
            speaking_style: "slow".into(),
            backstory: "kitchen".into(),
            voice_id: "warm".into(),
            mood_seed: "sleepy".into(),
        }
    }

    fn ctx_empty() -> PromptContext {
        PromptContext::new(persona(), vec![], vec![], &[], DEFAULT_TRANSCRIPT_TAIL, "hello")
    }

    #[test]
    fn parse_speaking_turn() {
        let t = parse_two_tier("INNER: curious\nINTENT: 0.9\nSPEAK: yes\nRESPONSE: Hello!").unwrap();
        assert_eq!(t, TwoTierTurn::new("curious", 0.9, true, "Hello!").unwrap());
    }

    #[test]
    fn parse_silent_turn() {
        let t = parse_two_tier("INNER: tired\nINTENT: 0.1\nSPEAK: no\nRESPONSE:").unwrap();
        assert!(!t.speak);
        assert_eq!(t.public_response, "");
    }

    #[test]
    fn parse_missing_inner() {
        let e = parse_two_tier("SPEAK: yes\nRESPONSE: hi").unwrap_err();
        assert_eq!(e.kind, ProviderErrorKind::MalformedResponse);
    }

    #[test]
    fn parse_tolerates_whitespace_and_multiline() {
        let raw = "\n  INNER:   a\n  second line \nINTENT: 1\n speak: YES \nRESPONSE:  line one\nline two  \n\n";
        let t = parse_two_tier(raw).unwrap();
        assert_eq!(t.inner_thoughts, "a\n  second line");
        assert_eq!(t.public_response, "line one\nline two");
        assert_eq!(t.engagement_intent, 1.0);
    }

    #[test]
    fn parse_rejects_invariant_violations() {
        for raw in [
            "INNER: x\nINTENT: 1.5\nSPEAK: yes\nRESPONSE: hi",
            "INNER: x\nINTENT: NaN\nSPEAK: yes\nRESPONSE: hi",
            "INNER: x\nINTENT: 0.5\nSPEAK: maybe\nRESPONSE: hi",
            "INNER: x\nINTENT: 0.5\nSPEAK: yes\nRESPONSE:",
            "INNER: x\nINTENT: 0.5\nSPEAK: no\nRESPONSE: hi",
            "INNER: x\nINNER: y\nINTENT: 0.5\nSPEAK: no\nRESPONSE:",
            "Sure! INNER: x\nINTENT: 0.5\nSPEAK: no\nRESPONSE:",
        ] {
            assert!(parse_two_tier(raw).is_err(), "{raw:?}");
        }
    }

    #[test]
    fn compose_empty_memories() {
        let req = compose_prompt(&ctx_empty(), &PromptAssets::default().dialogue);
        assert!(req.system_prompt.contains("Murmur"));
        assert!(req.system_prompt.contains("patient, chipped, loyal"));
        assert_eq!(req.system_prompt.matches(NO_MEMORIES).count(), 2);
        assert!(req.system_prompt.contains("RESPONSE:"));
        assert_eq!(req.response_schema, ResponseSchema::TwoTierTurn);
        assert_eq!(req.messages, vec![ChatMessage::user("hello")]);
        req.validate().unwrap();
    }

    #[test]
    fn compose_is_deterministic_and_orders_blocks() {
        let clock = StepClock::fixed();
        let rec = |text: &str, speaker| MemoryRecord {
            memory_id: text.into(),
            object_id: "A".into(),
            session_id: "s".into(),
            speaker,
            text: text.into(),
            embedding: Embedding::normalized(&[1.0]).unwrap(),
            created_at: clock.now(),
        };
        let h1 = rec("first meeting", Speaker::Human);
        let h2 = rec("I remember", Speaker::Object);
        let rel = ScoredMemory {
            record: rec("about rain", Speaker::Human),
            score: 0.5,
        };
        let transcript: Vec<TranscriptEntry> = (0..20)
            .map(|i| TranscriptEntry::speech(clock.now(), TranscriptSpeaker::Human, format!("line {i}")))
            .collect();
        let ctx = PromptContext::new(
            persona(),
            vec![h2.clone(), h1.clone()],
            vec![rel],
            &transcript,
            DEFAULT_TRANSCRIPT_TAIL,
            "hi",
        );
        assert_eq!(ctx.history_window, vec![h1, h2]);
        assert_eq!(ctx.transcript_tail().len(), 12);
        let tpl = PromptAssets::default().dialogue;
        let a = compose_prompt(&ctx, &tpl);
        assert_eq!(a, compose_prompt(&ctx, &tpl));
        let p = &a.system_prompt;
        let i1 = p.find("first meeting").unwrap();
        let i2 = p.find("Murmur: I remember").unwrap();
        let i3 = p.find("(0.50) Visitor: about rain").unwrap();
        assert!(i1 < i2 && i2 < i3);
        assert!(!p.contains("line 7\n") && p.contains("line 8") && p.contains("line 19"));
    }

    async fn run(script: Vec<&str>) -> (Result<TwoTierTurn>, usize) {
        let mocks = Mocks::new(MockChat::scripted(script), 8);
        let r = generate_turn(&ctx_empty(), &mocks.provider_set(), &PromptAssets::default().dialogue).await;
        (r, mocks.chat.calls())
    }

    #[tokio::test]
    async fn generate_passthrough() {
        let (t, calls) = run(vec!["INNER: curious\nINTENT: 0.9\nSPEAK: yes\nRESPONSE: Hello!"]).await;
        assert_eq!(t.unwrap(), TwoTierTurn::new("curious", 0.9, true, "Hello!").unwrap());
        assert_eq!(calls, 1);
    }

    #[tokio::test]
    async fn generate_reasks_once() {
        let (t, calls) = run(vec![
            "garbage",
            "INNER: ok\nINTENT: 0.2\nSPEAK: no\nRESPONSE:",
        ])
        .await;
        assert!(!t.unwrap().speak);
        assert_eq!(calls, 2);
        let (t, calls) = run(vec!["garbage", "more garbage"]).await;
        match t {
            Err(Error::Provider(e)) => assert_eq!(e.kind, ProviderErrorKind::MalformedResponse),
            other => panic!("{other:?}"),
        }
        assert_eq!(calls, 2);
    }

    fn line_text() -> impl Strategy<Value = String> {
        // printable text without newlines that does not itself look like a marker
        "[a-zA-Z0-9 ,.!?'-]{0,40}".prop_map(|s| s.trim().to_string())
            .prop_filter("not a marker", |s| marker(s).is_none())
    }

    proptest! {
        #[test]
        fn format_parse_round_trip(inner in line_text(), intent in 0.0f64..=1.0,
                                   speak in any::<bool>(), resp in line_text()) {
            let resp = if speak { if resp.is_empty() { "hi".to_string() } else { resp } } else { String::new() };
            let turn = TwoTierTurn::new(inner, intent, speak, resp).unwrap();
            let parsed = parse_two_tier(&turn.format()).unwrap();
            prop_assert_eq!(&parsed, &turn);
            prop_assert_eq!(parsed.format(), turn.format());
        }
    }
}
