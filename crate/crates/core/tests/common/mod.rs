#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::sync::Arc;

use portal_core::clock::{Clock, IdGen, SeededIds, StepClock};
use portal_core::events::EventHub;
use portal_core::gateway::{spawn_engine, EngineHandle};
use portal_core::identity::Registry;
use portal_core::memory::MemoryStore;
use portal_core::persistence::{Store, StoreLayout};
use portal_core::prompts::PromptAssets;
use portal_core::providers::mock::{MockChat, MockVision, Mocks};
use portal_core::ritual::devices::{NoCamera, RecordingAudio};
use portal_core::ritual::light::LightController;
use portal_core::ritual::{EngineDeps, RitualConfig, RitualEngine};

pub const DIM: usize = 64;

pub struct Harness {
    pub root: tempfile::TempDir,
    pub fixtures: PathBuf,
    pub store: Arc<Store>,
    pub mocks: Mocks,
    pub audio: Arc<RecordingAudio>,
    pub light: Arc<LightController>,
    pub handle: EngineHandle,
}

/// Writes `<name>.png` fixtures whose mock identity is their name.
pub fn write_fixture(dir: &Path, name: &str) -> PathBuf {
    let path = dir.join(format!("{name}.png"));
    std::fs::write(&path, format!("tag:{name}\n{name} pixels").as_bytes()).unwrap();
    path
}

pub fn harness(chat: MockChat, seed: u64) -> Harness {
    let root = tempfile::tempdir().unwrap();
    let fixtures = root.path().join("fixtures");
    std::fs::create_dir_all(&fixtures).unwrap();
    for name in ["fox", "kettle", "lamp"] {
        write_fixture(&fixtures, name);
    }
    let store = Arc::new(Store::open(StoreLayout::new(root.path().join("data"))).unwrap());
    let registry = Arc::new(Registry::load(store.clone()).unwrap());
    let clock: Arc<dyn Clock> = Arc::new(StepClock::fixed());
    let ids: Arc<dyn IdGen> = Arc::new(SeededIds::new(seed));
    let memory = Arc::new(MemoryStore::load(store.clone(), registry.clone(), clock.clone(), ids.clone()).unwrap());
    let mocks = Mocks::new(chat, DIM).with_vision(
        MockVision::new()
            .with_description("fox", "a small plush fox with a red scarf")
            .with_description("kettle", "a dented enamel kettle"),
    );
    let audio = Arc::new(RecordingAudio::default());
    let light = Arc::new(LightController::default());
    let engine = RitualEngine::new(EngineDeps {
        providers: mocks.provider_set(),
        registry,
        memory,
        prompts: PromptAssets::default(),
        clock,
        ids,
        camera: Arc::new(NoCamera),
        audio: audio.clone(),
        light: light.clone(),
        hub: Arc::new(EventHub::default()),
        config: RitualConfig::default(),
    });
    Harness {
        root,
        fixtures,
        store,
        mocks,
        audio,
        light,
        handle: spawn_engine(engine),
    }
}

pub fn canned() -> MockChat {
    MockChat::canned(RitualConfig::default().voices)
}
