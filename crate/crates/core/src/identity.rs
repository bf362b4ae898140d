//! Object identity: resolve a captured image to a persistent profile by
//! cosine similarity over the registry, minting a new profile with a
//! generated persona on a miss.

use std::sync::{Arc, RwLock};

use serde::{Deserialize, Serialize};

use crate::clock::{strictly_after, Clock, IdGen, Timestamp};
use crate::embedding::{cosine_similarity, Embedding};
use crate::error::{Error, ProviderError, Result};
use crate::persistence::Store;
use crate::prompts::Template;
use crate::providers::{ChatMessage, ChatRequest, ProviderSet, ResponseSchema, VisionRequest};

pub const DEFAULT_THRESHOLD: f64 = 0.85;
pub const MIN_TRAITS: usize = 3;
pub const MAX_TRAITS: usize = 7;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Persona {
    pub name: String,
    pub traits: Vec<String>,
    pub speaking_style: String,
    pub backstory: String,
    pub voice_id: String,
    pub mood_seed: String,
}

impl Persona {
    pub fn validate(&self, voices: &[String]) -> std::result::Result<(), String> {
        if self.name.trim().is_empty() {
            return Err("persona name is empty".into());
        }
        if !(MIN_TRAITS..=MAX_TRAITS).contains(&self.traits.len()) {
            return Err(format!(
                "persona has {} traits, expected {MIN_TRAITS}..={MAX_TRAITS}",
                self.traits.len()
            ));
        }
        if self.traits.iter().any(|t| t.trim().is_empty()) {
            return Err("persona has an empty trait".into());
        }
        if !voices.iter().any(|v| v == &self.voice_id) {
            return Err(format!("voice_id {:?} is not a configured voice", self.voice_id));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectProfile {
    pub object_id: String,
    pub description: String,
    pub persona: Persona,
    pub embedding: Embedding,
    pub created_at: Timestamp,
    pub last_seen_at: Timestamp,
    pub image_refs: Vec<String>,
}

/// Similarity threshold in (0, 1].
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct Threshold(f64);

impl TryFrom<f64> for Threshold {
    type Error = Error;

    fn try_from(value: f64) -> Result<Self> {
        Self::new(value)
    }
}

impl From<Threshold> for f64 {
    fn from(t: Threshold) -> f64 {
        t.0
    }
}

impl Threshold {
    pub fn new(value: f64) -> Result<Self> {
        if value > 0.0 && value <= 1.0 {
            Ok(Self(value))
        } else {
            Err(Error::usage(format!("threshold {value} outside (0, 1]")))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

impl Default for Threshold {
    fn default() -> Self {
        Self(DEFAULT_THRESHOLD)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum MatchOutcome {
    Matched { object_id: String, similarity: f64 },
    NewObject { object_id: String },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MatchResult {
    pub outcome: MatchOutcome,
    pub threshold: f64,
}

/// Index and similarity of the best registry entry: highest similarity,
/// ties to the earliest `created_at`, then to registry order.
pub fn best_match(query: &Embedding, registry: &[ObjectProfile]) -> Result<Option<(usize, f64)>> {
    let mut best: Option<(usize, f64)> = None;
    for (i, p) in registry.iter().enumerate() {
        let s = cosine_similarity(query, &p.embedding)?;
        let better = match best {
            None => true,
            Some((j, b)) => s > b || (s == b && p.created_at < registry[j].created_at),
        };
        if better {
            best = Some((i, s));
        }
    }
    Ok(best)
}

/// Linear scan. `Matched` iff the best similarity reaches the threshold;
/// otherwise a fresh id is minted (nothing is persisted here).
pub fn match_object(
    query: &Embedding,
    registry: &[ObjectProfile],
    threshold: Threshold,
    ids: &dyn IdGen,
) -> Result<MatchResult> {
    let outcome = match best_match(query, registry)? {
        Some((i, s)) if s >= threshold.value() => MatchOutcome::Matched {
            object_id: registry[i].object_id.clone(),
            similarity: s,
        },
        _ => MatchOutcome::NewObject {
            object_id: ids.next_id(),
        },
    };
    Ok(MatchResult {
        outcome,
        threshold: threshold.value(),
    })
}

/// In-memory view of the persisted registry. Writes go to disk first, so a
/// failed save never leaves a profile visible that is not stored.
#[derive(Debug)]
pub struct Registry {
    store: Arc<Store>,
    profiles: RwLock<Vec<ObjectProfile>>,
    resolve_lock: tokio::sync::Mutex<()>,
}

impl Registry {
    /// Loads every readable profile; corrupt records are logged and skipped.
    pub fn load(store: Arc<Store>) -> Result<Self> {
        let loaded = store.load_registry()?;
        let mut profiles: Vec<ObjectProfile> = Vec::with_capacity(loaded.records.len());
        for p in loaded.records {
            if let Some(existing) = profiles.iter_mut().find(|e| e.object_id == p.object_id) {
                *existing = p;
            } else {
                profiles.push(p);
            }
        }
        Ok(Self {
            store,
            profiles: RwLock::new(profiles),
            resolve_lock: tokio::sync::Mutex::new(()),
        })
    }

    pub fn store(&self) -> &Arc<Store> {
        &self.store
    }

    pub fn all(&self) -> Vec<ObjectProfile> {
        self.profiles.read().unwrap().clone()
    }

    pub fn get(&self, object_id: &str) -> Option<ObjectProfile> {
        self.profiles
            .read()
            .unwrap()
            .iter()
            .find(|p| p.object_id == object_id)
            .cloned()
    }

    pub fn contains(&self, object_id: &str) -> bool {
        self.profiles
            .read()
            .unwrap()
            .iter()
            .any(|p| p.object_id == object_id)
    }

    pub fn len(&self) -> usize {
        self.profiles.read().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Adds a new profile; an existing `object_id` is rejected.
    pub fn insert(&self, profile: ObjectProfile) -> Result<()> {
        let mut guard = self.profiles.write().unwrap();
        if guard.iter().any(|p| p.object_id == profile.object_id) {
            return Err(Error::usage(format!(
                "object_id {} already registered",
                profile.object_id
            )));
        }
        self.store.save_profile(&profile)?;
        guard.push(profile);
        Ok(())
    }

    /// Replaces an existing profile.
    pub fn update(&self, profile: ObjectProfile) -> Result<()> {
        let mut guard = self.profiles.write().unwrap();
        let slot = guard
            .iter_mut()
            .find(|p| p.object_id == profile.object_id)
            .ok_or_else(|| Error::usage(format!("unknown object_id {}", profile.object_id)))?;
        self.store.save_profile(&profile)?;
        *slot = profile;
        Ok(())
    }
}

/// Parses a persona sheet: the outermost JSON object in `raw`.
pub fn parse_persona(raw: &str, voices: &[String]) -> std::result::Result<Persona, String> {
    let start = raw.find('{').ok_or("no JSON object in persona sheet")?;
    let end = raw.rfind('}').ok_or("no JSON object in persona sheet")?;
    if end < start {
        return Err("no JSON object in persona sheet".into());
    }
    let persona: Persona =
        serde_json::from_str(&raw[start..=end]).map_err(|e| format!("persona sheet: {e}"))?;
    persona.validate(voices)?;
    Ok(persona)
}

const PERSONA_CORRECTION: &str = "That reply could not be used. Answer again with only the \
JSON object, following every rule above exactly.";

/// One chat call with the persona template; a malformed sheet is re-asked
/// once before giving up.
pub async fn generate_persona(
    description: &str,
    providers: &ProviderSet,
    template: &Template,
    voices: &[String],
) -> Result<Persona> {
    if description.trim().is_empty() {
        return Err(Error::usage("description must be non-empty"));
    }
    let voice_list = voices.join(", ");
    let mut req = ChatRequest {
        system_prompt: template.render(&[("description", description), ("voices", &voice_list)]),
        messages: vec![ChatMessage::user(description)],
        response_schema: ResponseSchema::PersonaSheet,
    };
    let mut last_err = String::new();
    for attempt in 0..2 {
        let raw = match providers.chat(&req).await {
            Ok(raw) => raw,
            Err(Error::Provider(ProviderError {
                kind: crate::ProviderErrorKind::MalformedResponse,
                detail,
            })) => {
                last_err = detail;
                String::new()
            }
            Err(e) => return Err(e),
        };
        if !raw.is_empty() {
            match parse_persona(&raw, voices) {
                Ok(p) => return Ok(p),
                Err(e) => {
                    tracing::warn!(attempt, error = %e, "malformed persona sheet");
                    last_err = e;
                }
            }
        }
        if attempt == 0 {
            req.messages.push(ChatMessage::assistant(if raw.is_empty() {
                "(no reply)".to_string()
            } else {
                raw
            }));
            req.messages.push(ChatMessage::user(PERSONA_CORRECTION));
        }
    }
    Err(Error::PersonaGeneration(last_err))
}

/// Everything needed to recognise or register an object.
pub struct IdentityResolver {
    pub providers: ProviderSet,
    pub registry: Arc<Registry>,
    pub threshold: Threshold,
    pub clock: Arc<dyn Clock>,
    pub ids: Arc<dyn IdGen>,
    pub persona_template: Template,
    pub voices: Vec<String>,
}

impl IdentityResolver {
    /// Returns the profile and whether this was a first meeting. The whole
    /// read-match-insert sequence is serialized, so two concurrent first
    /// meetings of one object cannot both register it.
    pub async fn resolve(&self, image: &VisionRequest) -> Result<(ObjectProfile, bool)> {
        let _serial = self.registry.resolve_lock.lock().await;
        let embedding = self.providers.embed_image(image).await?;
        let snapshot = self.registry.all();
        let result = match_object(&embedding, &snapshot, self.threshold, self.ids.as_ref())?;
        let store = self.registry.store().clone();
        match result.outcome {
            MatchOutcome::Matched { object_id, similarity } => {
                let mut profile = self
                    .registry
                    .get(&object_id)
                    .expect("matched profile is registered");
                let now = strictly_after(self.clock.now(), Some(profile.last_seen_at));
                profile.last_seen_at = now;
                store.archive_image(&mut profile, image.image_bytes(), image.mime_type(), now)?;
                self.registry.update(profile.clone())?;
                tracing::info!(%object_id, similarity, "re-recognised object");
                Ok((profile, false))
            }
            MatchOutcome::NewObject { object_id } => {
                let description = self.providers.describe_image(image).await?;
                let persona = generate_persona(
                    &description,
                    &self.providers,
                    &self.persona_template,
                    &self.voices,
                )
                .await?;
                let now = self.clock.now();
                let mut profile = ObjectProfile {
                    object_id: object_id.clone(),
                    description,
                    persona,
                    embedding,
                    created_at: now,
                    last_seen_at: now,
                    image_refs: Vec::new(),
                };
                store.archive_image(&mut profile, image.image_bytes(), image.mime_type(), now)?;
                self.registry.insert(profile.clone())?;
                tracing::info!(%object_id, name = %profile.persona.name, "first meeting");
                Ok((profile, true))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clock::{SeededIds, StepClock};
    use crate::persistence::{FaultPoint, StoreLayout};
    use crate::providers::mock::{MockChat, Mocks};
    use crate::providers::ImageMime;
    use crate::prompts::PromptAssets;
    use chrono::Duration;
    use proptest::prelude::*;

    fn voices() -> Vec<String> {
        vec!["warm".into(), "playful".into()]
    }

    fn sheet(name: &str) -> String {
        serde_json::json!({
            "name": name, "traits": ["patient", "chipped", "loyal"],
            "speaking_style": "slow", "backstory": "kitchen shelf",
            "voice_id": "warm", "mood_seed": "sleepy"
        })
        .to_string()
    }

    fn profile_with(id: &str, v: &[f64], created: i64) -> ObjectProfile {
        let t = chrono::DateTime::from_timestamp(created, 0).unwrap();
        ObjectProfile {
            object_id: id.into(),
            description: String::new(),
            persona: Persona {
                name: "n".into(),
                traits: vec!["a".into(); 3],
                speaking_style: String::new(),
                backstory: String::new(),
                voice_id: "warm".into(),
                mood_seed: String::new(),
            },
            embedding: Embedding::normalized(v).unwrap(),
            created_at: t,
            last_seen_at: t,
        image_refs: vec![],
        }
    }

    #[test]
    fn threshold_domain() {
        assert!(Threshold::new(0.0).is_err());
        assert!(Threshold::new(1.0).is_ok());
        assert!(Threshold::new(1.01).is_err());
        assert!(Threshold::new(f64::NAN).is_err());
    }

    #[test]
    fn empty_registry_is_new_object() {
        let ids = SeededIds::new(1);
        let q = Embedding::normalized(&[1.0, 0.0]).unwrap();
        let r = match_object(&q, &[], Threshold::default(), &ids).unwrap();
        assert!(matches!(r.outcome, MatchOutcome::NewObject { .. }));
    }

    #[test]
    fn matches_nearest_above_threshold() {
        let ids = SeededIds::new(1);
        let reg = vec![profile_with("A", &[1.0, 0.0], 0), profile_with("B", &[0.0, 1.0], 1)];
        let q = Embedding::normalized(&[0.9, 0.1]).unwrap();
        let r = match_object(&q, &reg, Threshold::new(0.85).unwrap(), &ids).unwrap();
        // oracle: 0.9 / sqrt(0.82)
        let expected = 0.9 / 0.82f64.sqrt();
        match r.outcome {
            MatchOutcome::Matched { object_id, similarity } => {
                assert_eq!(object_id, "A");
                assert!((similarity - 0.99388).abs() < 1e-4);
                assert!((similarity - expected).abs() < 1e-6);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn below_threshold_is_new() {
        let ids = SeededIds::new(1);
        let reg = vec![profile_with("A", &[1.0, 0.0], 0)];
        let q = Embedding::normalized(&[0.0, 1.0]).unwrap();
        let r = match_object(&q, &reg, Threshold::default(), &ids).unwrap();
        assert!(matches!(r.outcome, MatchOutcome::NewObject { .. }));
    }

    #[test]
    fn ties_go_to_earliest_created() {
        let ids = SeededIds::new(1);
        let reg = vec![profile_with("late", &[1.0, 0.0], 50), profile_with("early", &[1.0, 0.0], 10)];
        let q = Embedding::normalized(&[1.0, 0.0]).unwrap();
        let r = match_object(&q, &reg, Threshold::default(), &ids).unwrap();
        assert!(matches!(r.outcome, MatchOutcome::Matched { ref object_id, .. } if object_id == "early"));
    }

    fn arb_vec(dim: usize) -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(-1.0f64..1.0, dim)
            .prop_filter("non-zero", |v| v.iter().map(|x| x * x).sum::<f64>() > 1e-6)
    }

    proptest! {
        #[test]
        fn scale_invariance(q in arb_vec(6), reg in prop::collection::vec(arb_vec(6), 0..20),
                            scale in 0.01f32..100.0, t in 0.05f64..1.0) {
            let ids = SeededIds::new(3);
            let profiles: Vec<_> = reg.iter().enumerate()
                .map(|(i, v)| profile_with(&format!("p{i}"), v, i as i64)).collect();
            let query = Embedding::normalized(&q).unwrap();
            let scaled = query.scaled(scale).unwrap();
            let a = best_match(&query, &profiles).unwrap();
            let b = best_match(&scaled, &profiles).unwrap();
            if let (Some((_, sa)), Some((_, sb))) = (a, b) {
                // away from the decision boundary the outcome cannot move
                prop_assume!((sa - t).abs() > 1e-5);
                let sims: Vec<f64> = profiles.iter()
                    .map(|p| cosine_similarity(&query, &p.embedding).unwrap()).collect();
                let mut sorted = sims.clone();
                sorted.sort_by(|x, y| y.partial_cmp(x).unwrap());
                prop_assume!(sorted.len() < 2 || sorted[0] - sorted[1] > 1e-5);
                prop_assert!((sa - sb).abs() < 1e-6);
            }
            let th = Threshold::new(t).unwrap();
            let ra = match_object(&query, &profiles, th, &ids).unwrap();
            let rb = match_object(&scaled, &profiles, th, &ids).unwrap();
            match (ra.outcome, rb.outcome) {
                (MatchOutcome::Matched { object_id: x, .. }, MatchOutcome::Matched { object_id: y, .. }) => prop_assert_eq!(x, y),
                (MatchOutcome::NewObject { .. }, MatchOutcome::NewObject { .. }) => {}
                (x, y) => prop_assert!(false, "{x:?} vs {y:?}"),
            }
        }

        #[test]
        fn threshold_monotonicity(q in arb_vec(4), reg in prop::collection::vec(arb_vec(4), 0..10),
                                  t1 in 0.01f64..1.0, t2 in 0.01f64..1.0) {
            let ids = SeededIds::new(3);
            let (lo, hi) = if t1 <= t2 { (t1, t2) } else { (t2, t1) };
            let profiles: Vec<_> = reg.iter().enumerate()
                .map(|(i, v)| profile_with(&format!("p{i}"), v, i as i64)).collect();
            let query = Embedding::normalized(&q).unwrap();
            let at_lo = match_object(&query, &profiles, Threshold::new(lo).unwrap(), &ids).unwrap();
            let at_hi = match_object(&query, &profiles, Threshold::new(hi).unwrap(), &ids).unwrap();
            if matches!(at_lo.outcome, MatchOutcome::NewObject { .. }) {
                let still_new = matches!(at_hi.outcome, MatchOutcome::NewObject { .. });
                prop_assert!(still_new, "raising the threshold produced a match");
            }
        }
    }

    #[test]
    fn persona_validation() {
        let v = voices();
        assert_eq!(parse_persona(&sheet("Murmur"), &v).unwrap().name, "Murmur");
        assert!(parse_persona(&sheet(""), &v).is_err());
        let mut p = parse_persona(&sheet("x"), &v).unwrap();
        p.traits = vec!["a".into(); 8];
        assert!(p.validate(&v).is_err());
        p.traits.truncate(2);
        assert!(p.validate(&v).is_err());
        p.traits.push("c".into());
        p.voice_id = "gravel".into();
        assert!(p.validate(&v).is_err());
        assert!(parse_persona(&format!("```json\n{}\n```", sheet("Fenced")), &v).is_ok());
    }

    async fn persona_from(script: Vec<String>) -> (Result<Persona>, usize) {
        let mocks = Mocks::new(MockChat::scripted(script), 8);
        let r = generate_persona(
            "a chipped blue mug",
            &mocks.provider_set(),
            &PromptAssets::default().persona,
            &voices(),
        )
        .await;
        (r, mocks.chat.calls())
    }

    #[tokio::test]
    async fn persona_passthrough() {
        let (p, calls) = persona_from(vec![sheet("Murmur")]).await;
        let p = p.unwrap();
        assert_eq!(p.name, "Murmur");
        assert_eq!(p.traits, vec!["patient", "chipped", "loyal"]);
        assert_eq!(calls, 1);
    }

    #[tokio::test]
    async fn persona_retry_then_fail() {
        let (p, calls) = persona_from(vec!["nonsense".into(), "still nonsense".into()]).await;
        assert!(matches!(p, Err(Error::PersonaGeneration(_))));
        assert_eq!(calls, 2);
        let (p, calls) = persona_from(vec!["nonsense".into(), sheet("Second")]).await;
        assert_eq!(p.unwrap().name, "Second");
        assert_eq!(calls, 2);
        let (p, _) = persona_from(vec![sheet(""), sheet("")]).await;
        assert!(matches!(p, Err(Error::PersonaGeneration(_))));
    }

    #[tokio::test]
    async fn persona_prompt_contains_description() {
        let mocks = Mocks::new(MockChat::scripted([sheet("M")]), 8);
        generate_persona("a chipped blue mug", &mocks.provider_set(), &PromptAssets::default().persona, &voices())
            .await
            .unwrap();
        let req = &mocks.chat.requests()[0];
        assert!(req.system_prompt.contains("a chipped blue mug"));
        assert!(req.system_prompt.contains("warm, playful"));
        assert_eq!(req.response_schema, ResponseSchema::PersonaSheet);
    }

    struct Fixture {
        _dir: tempfile::TempDir,
        mocks: Mocks,
        resolver: IdentityResolver,
    }

    fn fixture(chat: MockChat) -> Fixture {
        let dir = tempfile::tempdir().unwrap();
        let store = Arc::new(Store::open(StoreLayout::new(dir.path())).unwrap());
        let registry = Arc::new(Registry::load(store).unwrap());
        let mocks = Mocks::new(chat, 512);
        let resolver = IdentityResolver {
            providers: mocks.provider_set(),
            registry,
            threshold: Threshold::default(),
            clock: Arc::new(StepClock::new(
                chrono::DateTime::from_timestamp(1_700_000_000, 0).unwrap(),
                Duration::zero(),
            )),
            ids: Arc::new(SeededIds::new(9)),
            persona_template: PromptAssets::default().persona,
            voices: voices(),
        };
        Fixture {
            _dir: dir,
            mocks,
            resolver,
        }
    }

    fn image(tag: &str) -> VisionRequest {
        VisionRequest::new(format!("tag:{tag}\n").into_bytes(), ImageMime::Png).unwrap()
    }

    #[tokio::test]
    async fn re_recognition_is_idempotent() {
        let f = fixture(MockChat::canned(voices()));
        let (a, new_a) = f.resolver.resolve(&image("fox")).await.unwrap();
        let (b, new_b) = f.resolver.resolve(&image("fox")).await.unwrap();
        assert!(new_a && !new_b);
        assert_eq!(a.object_id, b.object_id);
        assert_eq!(f.resolver.registry.len(), 1);
        // clock is frozen (zero step) yet last_seen_at still strictly increases
        assert!(b.last_seen_at > a.last_seen_at);
        assert_eq!(b.image_refs.len(), 2);
        assert_eq!(f.mocks.vision.calls(), 1, "description only on first meeting");
        let reloaded = Registry::load(f.resolver.registry.store().clone()).unwrap();
        assert_eq!(reloaded.get(&a.object_id).unwrap(), b);
    }

    #[tokio::test]
    async fn distinct_images_get_distinct_ids() {
        let f = fixture(MockChat::canned(voices()));
        let (a, _) = f.resolver.resolve(&image("fox")).await.unwrap();
        let (b, was_new) = f.resolver.resolve(&image("mug")).await.unwrap();
        assert!(was_new);
        assert_ne!(a.object_id, b.object_id);
    }

    #[tokio::test]
    async fn persona_failure_registers_nothing() {
        let f = fixture(MockChat::scripted(["x", "y"]));
        let err = f.resolver.resolve(&image("fox")).await.unwrap_err();
        assert!(matches!(err, Error::PersonaGeneration(_)));
        assert!(f.resolver.registry.is_empty());
    }

    #[tokio::test]
    async fn storage_failure_registers_nothing() {
        let f = fixture(MockChat::canned(voices()));
        f.resolver.registry.store().inject_fault(FaultPoint::Rename);
        let err = f.resolver.resolve(&image("fox")).await.unwrap_err();
        assert!(matches!(err, Error::Storage(_)));
        assert!(f.resolver.registry.is_empty());
        assert!(f.resolver.registry.store().load_registry().unwrap().records.is_empty());
    }

    #[tokio::test]
    async fn concurrent_first_meetings_register_once() {
        let f = Arc::new(fixture(MockChat::canned(voices())));
        let tasks: Vec<_> = (0..8)
            .map(|_| {
                let f = f.clone();
                tokio::spawn(async move { f.resolver.resolve(&image("fox")).await.unwrap() })
            })
            .collect();
        let mut news = 0;
        for t in tasks {
            if t.await.unwrap().1 {
                news += 1;
            }
        }
        assert_eq!(news, 1);
        assert_eq!(f.resolver.registry.len(), 1);
    }

    #[test]
    fn registry_rejects_duplicate_ids() {
        let dir = tempfile::tempdir().unwrap();
        let store = Arc::new(Store::open(StoreLayout::new(dir.path())).unwrap());
        let reg = Registry::load(store).unwrap();
        reg.insert(profile_with("A", &[1.0], 0)).unwrap();
        assert!(reg.insert(profile_with("A", &[1.0], 1)).is_err());
        assert_eq!(reg.len(), 1);
    }
}
