//! The engine actor: a single task owns the [`RitualEngine`] and applies
//! commands from a queue one at a time.

use std::sync::Arc;

use tokio::sync::{mpsc, oneshot};

use crate::error::{Error, Result};
use crate::events::{Channel, EventHub, Subscription};
use crate::identity::ObjectProfile;
use crate::memory::{MemoryQuery, MemoryRecord};
use crate::providers::VisionRequest;
use crate::ritual::{RitualEngine, StateSnapshot, StepReport};

pub const QUEUE_DEPTH: usize = 64;

type Reply<T> = oneshot::Sender<Result<T>>;

enum Command {
    Awaken(Option<VisionRequest>, Reply<StepReport>),
    Utterance(String, Reply<StepReport>),
    Goodbye(Reply<StepReport>),
    Hear(Vec<u8>, Reply<StepReport>),
    Snapshot(Channel, Reply<StateSnapshot>),
    Objects(Reply<Vec<ObjectProfile>>),
    Memories(MemoryQuery, Reply<Vec<(MemoryRecord, Option<f64>)>>),
}

#[derive(Clone)]
pub struct EngineHandle {
    tx: mpsc::Sender<Command>,
    hub: Arc<EventHub>,
}

/// Moves the engine into its own task.
pub fn spawn_engine(mut engine: RitualEngine) -> EngineHandle {
    let hub = engine.deps().hub.clone();
    let (tx, mut rx) = mpsc::channel(QUEUE_DEPTH);
    tokio::spawn(async move {
        while let Some(cmd) = rx.recv().await {
            match cmd {
                Command::Awaken(img, r) => {
                    let _ = r.send(engine.awaken(img).await);
                }
                Command::Utterance(text, r) => {
                    let _ = r.send(engine.utterance(&text).await);
                }
                Command::Goodbye(r) => {
                    let _ = r.send(engine.goodbye().await);
                }
                Command::Hear(audio, r) => {
                    let _ = r.send(engine.hear(&audio).await);
                }
                Command::Snapshot(ch, r) => {
                    let _ = r.send(Ok(engine.snapshot(ch)));
                }
                Command::Objects(r) => {
                    let _ = r.send(Ok(engine.objects()));
                }
                Command::Memories(q, r) => {
                    let _ = r.send(engine.memories(&q).await);
                }
            }
        }
        tracing::debug!("engine queue closed");
    });
    EngineHandle { tx, hub }
}

impl EngineHandle {
    async fn call<T>(&self, make: impl FnOnce(Reply<T>) -> Command) -> Result<T> {
        let (tx, rx) = oneshot::channel();
        self.tx.send(make(tx)).await.map_err(|_| Error::EngineStopped)?;
        rx.await.map_err(|_| Error::EngineStopped)?
    }

    pub async fn awaken(&self, image: Option<VisionRequest>) -> Result<StepReport> {
        self.call(|r| Command::Awaken(image, r)).await
    }

    pub async fn utterance(&self, text: impl Into<String>) -> Result<StepReport> {
        let text = text.into();
        self.call(|r| Command::Utterance(text, r)).await
    }

    pub async fn goodbye(&self) -> Result<StepReport> {
        self.call(Command::Goodbye).await
    }

    pub async fn hear(&self, audio: Vec<u8>) -> Result<StepReport> {
        self.call(|r| Command::Hear(audio, r)).await
    }

    pub async fn snapshot(&self, channel: Channel) -> Result<StateSnapshot> {
        self.call(|r| Command::Snapshot(channel, r)).await
    }

    pub async fn objects(&self) -> Result<Vec<ObjectProfile>> {
        self.call(Command::Objects).await
    }

    pub async fn memories(&self, query: MemoryQuery) -> Result<Vec<(MemoryRecord, Option<f64>)>> {
        self.call(|r| Command::Memories(query, r)).await
    }

    pub fn subscribe(&self, channel: Channel, since: Option<u64>) -> Subscription {
        self.hub.subscribe(channel, since)
    }

    pub fn hub(&self) -> &Arc<EventHub> {
        &self.hub
    }
}
