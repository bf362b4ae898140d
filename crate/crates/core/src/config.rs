//! Daemon configuration (TOML) and wiring of the engine from it.

use std::fmt;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::clock::{Clock, IdGen, RandomIds, SeededIds, StepClock, SystemClock};
use crate::embedding::DEFAULT_DIM;
use crate::error::{Error, Result};
use crate::events::EventHub;
use crate::identity::{Registry, Threshold, DEFAULT_THRESHOLD};
use crate::memory::MemoryStore;
use crate::persistence::{Store, StoreLayout, DATA_DIR_ENV, DEFAULT_DATA_DIR};
use crate::prompts::PromptAssets;
use crate::providers::live::{
    Endpoint, LiveChat, LiveEmbedding, LiveSpeech, LiveTranscription, LiveVision,
};
use crate::providers::mock::{MockChat, MockEmbedding, MockSpeech, MockTranscription, MockVision};
use crate::providers::replay::ReplayChat;
use crate::providers::retry::{RetryPolicy, Retrying};
use crate::providers::ProviderSet;
use crate::ritual::devices::{CameraSource, FixtureCamera, NoCamera, NullAudio};
use crate::ritual::engine::{default_voices, EngineDeps, RitualConfig, DEFAULT_APOLOGY};
use crate::ritual::light::{LightController, LightPattern, LightScheme, SamplerConfig, SAMPLE_HZ};
use crate::ritual::TriggerWords;

pub const PARTICIPANT_TOKEN_ENV: &str = "PORTAL_PARTICIPANT_TOKEN";
pub const OPERATOR_TOKEN_ENV: &str = "PORTAL_OPERATOR_TOKEN";
pub const DEFAULT_LISTEN: &str = "127.0.0.1:8787";

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ProviderChoice {
    #[default]
    Mock,
    Live {
        base_url: String,
        #[serde(default)]
        model: String,
        /// Environment variable holding the bearer token.
        #[serde(default)]
        token_env: Option<String>,
    },
    /// Chat only: answer from recorded fixtures in `dir`.
    Replay { dir: PathBuf },
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProvidersConfig {
    pub vision: ProviderChoice,
    pub embedding: ProviderChoice,
    pub chat: ProviderChoice,
    pub speech: ProviderChoice,
    pub transcription: ProviderChoice,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RitualSettings {
    pub threshold: f64,
    pub awaken_word: String,
    pub goodbye_word: String,
    pub voices: Vec<String>,
    pub history_limit: usize,
    pub relevant_limit: usize,
    pub transcript_tail: usize,
    pub apology: String,
}

impl Default for RitualSettings {
    fn default() -> Self {
        let c = RitualConfig::default();
        Self {
            threshold: DEFAULT_THRESHOLD,
            awaken_word: c.triggers.awaken,
            goodbye_word: c.triggers.goodbye,
            voices: default_voices(),
            history_limit: c.history_limit,
            relevant_limit: c.relevant_limit,
            transcript_tail: c.transcript_tail,
            apology: DEFAULT_APOLOGY.into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LightSinkChoice {
    /// Append samples to `<data_dir>/light.log`.
    Log,
    Console,
    None,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LightSettings {
    pub request_level: f64,
    pub breathing_min: f64,
    pub breathing_max: f64,
    pub breathing_period_s: f64,
    pub sample_hz: f64,
    /// Forward every n-th sample to event subscribers; 0 disables.
    pub publish_every: u32,
    pub sink: LightSinkChoice,
}

impl Default for LightSettings {
    fn default() -> Self {
        Self {
            request_level: 1.0,
            breathing_min: 0.15,
            breathing_max: 0.9,
            breathing_period_s: 4.0,
            sample_hz: SAMPLE_HZ,
            publish_every: SamplerConfig::default().publish_every,
            sink: LightSinkChoice::Log,
        }
    }
}

impl LightSettings {
    pub fn scheme(&self) -> Result<LightScheme> {
        Ok(LightScheme {
            request: LightPattern::steady(self.request_level)?,
            conversation: LightPattern::breathing(
                self.breathing_min,
                self.breathing_max,
                self.breathing_period_s,
            )?,
            idle: LightPattern::off(),
            transformation: LightPattern::off(),
        })
    }

    pub fn sampler(&self) -> SamplerConfig {
        SamplerConfig {
            hz: self.sample_hz,
            publish_every: self.publish_every,
        }
    }
}

#[derive(Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AuthConfig {
    pub participant_token: Option<String>,
    pub operator_token: Option<String>,
}

impl fmt::Debug for AuthConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let shown = |t: &Option<String>| if t.is_some() { "<redacted>" } else { "<none>" };
        f.debug_struct("AuthConfig")
            .field("participant_token", &shown(&self.participant_token))
            .field("operator_token", &shown(&self.operator_token))
            .finish()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RetrySettings {
    pub max_retries: u32,
    pub backoff_ms: Vec<u64>,
    pub deadline_ms: u64,
}

impl Default for RetrySettings {
    fn default() -> Self {
        let p = RetryPolicy::default();
        Self {
            max_retries: p.max_retries,
            backoff_ms: p.backoff.iter().map(|d| d.as_millis() as u64).collect(),
            deadline_ms: p.deadline.as_millis() as u64,
        }
    }
}

impl RetrySettings {
    pub fn policy(&self) -> RetryPolicy {
        RetryPolicy {
            max_retries: self.max_retries,
            backoff: self.backoff_ms.iter().copied().map(Duration::from_millis).collect(),
            deadline: Duration::from_millis(self.deadline_ms),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DaemonConfig {
    pub data_dir: PathBuf,
    pub listen: String,
    /// Fixed clock and seeded ids, for reproducible runs.
    pub seed: Option<u64>,
    pub embedding_dim: usize,
    /// Image returned by the simulated camera.
    pub camera_fixture: Option<PathBuf>,
    /// Directory that `image_ref` in awaken requests is resolved against.
    pub fixtures_dir: Option<PathBuf>,
    /// Overrides for the prompt templates.
    pub prompts_dir: Option<PathBuf>,
    pub providers: ProvidersConfig,
    pub ritual: RitualSettings,
    pub light: LightSettings,
    pub auth: AuthConfig,
    pub retry: RetrySettings,
}

impl Default for DaemonConfig {
    fn default() -> Self {
        Self {
            data_dir: PathBuf::from(DEFAULT_DATA_DIR),
            listen: DEFAULT_LISTEN.into(),
            seed: None,
            embedding_dim: DEFAULT_DIM,
            camera_fixture: None,
            fixtures_dir: None,
            prompts_dir: None,
            providers: ProvidersConfig::default(),
            ritual: RitualSettings::default(),
            light: LightSettings::default(),
            auth: AuthConfig::default(),
            retry: RetrySettings::default(),
        }
    }
}

impl DaemonConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let config: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// Defaults with the data dir taken from the environment if set.
    pub fn from_env_defaults() -> Self {
        let mut c = Self::default();
        if let Ok(dir) = std::env::var(DATA_DIR_ENV) {
            c.data_dir = dir.into();
        }
        c
    }

    /// Token environment variables override the file.
    pub fn apply_env(&mut self) {
        if let Ok(t) = std::env::var(PARTICIPANT_TOKEN_ENV) {
            self.auth.participant_token = Some(t);
        }
        if let Ok(t) = std::env::var(OPERATOR_TOKEN_ENV) {
            self.auth.operator_token = Some(t);
        }
    }

    pub fn mock_all(&mut self) {
        self.providers = ProvidersConfig::default();
    }

    pub fn validate(&self) -> Result<()> {
        Threshold::new(self.ritual.threshold).map_err(|e| Error::Config(e.to_string()))?;
        self.light.scheme()?;
        if !(self.light.sample_hz.is_finite() && self.light.sample_hz > 0.0) {
            return Err(Error::Config("light.sample_hz must be positive".into()));
        }
        if self.embedding_dim == 0 {
            return Err(Error::Config("embedding_dim must be positive".into()));
        }
        if self.ritual.voices.is_empty() {
            return Err(Error::Config("at least one voice is required".into()));
        }
        let words = [&self.ritual.awaken_word, &self.ritual.goodbye_word];
        if words.iter().any(|w| w.trim().is_empty() || w.contains(char::is_whitespace)) {
            return Err(Error::Config("trigger words must be single non-empty words".into()));
        }
        if self.ritual.awaken_word.eq_ignore_ascii_case(&self.ritual.goodbye_word) {
            return Err(Error::Config("trigger words must differ".into()));
        }
        if self.retry.backoff_ms.is_empty() && self.retry.max_retries > 0 {
            return Err(Error::Config("retry.backoff_ms must not be empty".into()));
        }
        let p = &self.providers;
        for (name, choice) in [
            ("vision", &p.vision),
            ("embedding", &p.embedding),
            ("speech", &p.speech),
            ("transcription", &p.transcription),
        ] {
            if matches!(choice, ProviderChoice::Replay { .. }) {
                return Err(Error::Config(format!("replay is only supported for chat, not {name}")));
            }
        }
        self.listen
            .parse::<std::net::SocketAddr>()
            .map_err(|e| Error::Config(format!("listen {:?}: {e}", self.listen)))?;
        Ok(())
    }

    pub fn ritual_config(&self) -> Result<RitualConfig> {
        let r = &self.ritual;
        Ok(RitualConfig {
            triggers: TriggerWords {
                awaken: r.awaken_word.clone(),
                goodbye: r.goodbye_word.clone(),
            },
            threshold: Threshold::new(r.threshold)?,
            voices: r.voices.clone(),
            history_limit: r.history_limit,
            relevant_limit: r.relevant_limit,
            transcript_tail: r.transcript_tail,
            light: self.light.scheme()?,
            apology: r.apology.clone(),
        })
    }

    pub fn provider_set(&self) -> Result<ProviderSet> {
        let policy = self.retry.policy();
        let p = &self.providers;
        let endpoint = |choice: &ProviderChoice, default_env: &str| -> Option<Endpoint> {
            match choice {
                ProviderChoice::Live {
                    base_url,
                    model,
                    token_env,
                } => Some(Endpoint {
                    base_url: base_url.clone(),
                    model: model.clone(),
                    token: std::env::var(token_env.as_deref().unwrap_or(default_env)).ok(),
                }),
                _ => None,
            }
        };
        let vision: Arc<dyn crate::providers::VisionProvider> =
            match endpoint(&p.vision, "PORTAL_VISION_KEY") {
                Some(e) => Arc::new(Retrying::new(LiveVision::new(e), policy.clone())),
                None => Arc::new(MockVision::new()),
            };
        let embedding: Arc<dyn crate::providers::EmbeddingProvider> =
            match endpoint(&p.embedding, "PORTAL_EMBED_KEY") {
                Some(e) => Arc::new(Retrying::new(LiveEmbedding::new(e), policy.clone())),
                None => Arc::new(MockEmbedding::new(self.embedding_dim)),
            };
        let chat: Arc<dyn crate::providers::ChatProvider> = match &p.chat {
            ProviderChoice::Replay { dir } => Arc::new(ReplayChat::replay(dir.clone())),
            choice => match endpoint(choice, "PORTAL_CHAT_KEY") {
                Some(e) => Arc::new(Retrying::new(LiveChat::new(e), policy.clone())),
                None => Arc::new(MockChat::canned(self.ritual.voices.clone())),
            },
        };
        let speech: Arc<dyn crate::providers::SpeechProvider> =
            match endpoint(&p.speech, "PORTAL_TTS_KEY") {
                Some(e) => Arc::new(Retrying::new(LiveSpeech::new(e), policy.clone())),
                None => Arc::new(MockSpeech::new()),
            };
        let transcription: Arc<dyn crate::providers::TranscriptionProvider> =
            match endpoint(&p.transcription, "PORTAL_STT_KEY") {
                Some(e) => Arc::new(Retrying::new(LiveTranscription::new(e), policy)),
                None => Arc::new(MockTranscription::default()),
            };
        Ok(ProviderSet::new(
            vision,
            embedding,
            chat,
            speech,
            transcription,
            self.embedding_dim,
        ))
    }

    /// Opens the data dir and wires every engine dependency.
    pub fn engine_deps(&self, hub: Arc<EventHub>, light: Arc<LightController>) -> Result<EngineDeps> {
        self.validate()?;
        let layout = StoreLayout::new(&self.data_dir);
        let store = Arc::new(Store::open(layout)?);
        let registry = Arc::new(Registry::load(store.clone())?);
        let (clock, ids): (Arc<dyn Clock>, Arc<dyn IdGen>) = match self.seed {
            Some(seed) => (Arc::new(StepClock::fixed()), Arc::new(SeededIds::new(seed))),
            None => (Arc::new(SystemClock), Arc::new(RandomIds)),
        };
        let memory = Arc::new(MemoryStore::load(store, registry.clone(), clock.clone(), ids.clone())?);
        let prompts = match &self.prompts_dir {
            Some(dir) => PromptAssets::load_overrides(dir)?,
            None => PromptAssets::default(),
        };
        let camera: Arc<dyn CameraSource> = match &self.camera_fixture {
            Some(path) => Arc::new(FixtureCamera::new(path)),
            None => Arc::new(NoCamera),
        };
        Ok(EngineDeps {
            providers: self.provider_set()?,
            registry,
            memory,
            prompts,
            clock,
            ids,
            camera,
            audio: Arc::new(NullAudio),
            light,
            hub,
            config: self.ritual_config()?,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        DaemonConfig::default().validate().unwrap();
        let c = DaemonConfig::parse("").unwrap();
        assert_eq!(c, DaemonConfig::default());
    }

    #[test]
    fn parses_full_file() {
        let c = DaemonConfig::parse(
            r#"
            data_dir = "/tmp/p"
            listen = "0.0.0.0:9000"
            seed = 7
            [ritual]
            threshold = 0.9
            awaken_word = "wake"
            [light]
            breathing_period_s = 5.0
            sink = "none"
            [auth]
            operator_token = "op"
            [providers.chat]
            kind = "live"
            base_url = "http://localhost:1"
            model = "m"
            [providers.embedding]
            kind = "mock"
            "#,
        )
        .unwrap();
        assert_eq!(c.seed, Some(7));
        assert_eq!(c.ritual.awaken_word, "wake");
        assert_eq!(c.ritual_config().unwrap().light.conversation.period_s, 5.0);
        assert!(matches!(c.providers.chat, ProviderChoice::Live { .. }));
        assert!(!format!("{c:?}").contains("\"op\""));
    }

    #[test]
    fn rejects_invalid() {
        for text in [
            "[ritual]\nthreshold = 0.0",
            "[ritual]\nthreshold = 1.5",
            "[light]\nbreathing_min = 0.9\nbreathing_max = 0.1",
            "[ritual]\nawaken_word = \"goodbye\"",
            "[ritual]\nvoices = []",
            "listen = \"nowhere\"",
            "[providers.vision]\nkind = \"replay\"\ndir = \"x\"",
            "unknown_key = 1",
        ] {
            assert!(matches!(DaemonConfig::parse(text), Err(Error::Config(_))), "{text}");
        }
    }

    #[test]
    fn builds_mock_engine_deps() {
        let dir = tempfile::tempdir().unwrap();
        let c = DaemonConfig {
            data_dir: dir.path().to_path_buf(),
            embedding_dim: 16,
            ..Default::default()
        };
        let deps = c
            .engine_deps(Arc::new(EventHub::default()), Arc::new(LightController::default()))
            .unwrap();
        assert_eq!(deps.providers.embedding_dim(), 16);
        assert!(dir.path().join("memories").is_dir());
    }
}
