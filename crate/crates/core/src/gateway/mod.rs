//! Outward faces of the daemon. The HTTP server and the REPL both drive the
//! engine through an [`EngineHandle`], so they share one code path.

pub mod handle;
pub mod http;
pub mod repl;

use std::sync::Arc;

use tokio::task::JoinHandle;

use crate::config::{DaemonConfig, LightSinkChoice};
use crate::error::Result;
use crate::events::EventHub;
use crate::ritual::light::{spawn_sampler, ConsoleSink, LightController, LightSink, LogFileSink};
use crate::ritual::RitualEngine;

pub use handle::{spawn_engine, EngineHandle};

/// A running engine plus its light sampler.
pub struct Daemon {
    pub config: DaemonConfig,
    pub handle: EngineHandle,
    pub light: Arc<LightController>,
    sampler: Option<JoinHandle<()>>,
}

impl Daemon {
    /// Must be called inside a tokio runtime.
    pub fn start(config: DaemonConfig) -> Result<Self> {
        let hub = Arc::new(EventHub::default());
        let light = Arc::new(LightController::default());
        let deps = config.engine_deps(hub.clone(), light.clone())?;
        let clock = deps.clock.clone();
        let handle = spawn_engine(RitualEngine::new(deps));
        let sink: Option<Arc<dyn LightSink>> = match config.light.sink {
            LightSinkChoice::Log => Some(Arc::new(LogFileSink::open(&config.data_dir.join("light.log"))?)),
            LightSinkChoice::Console => Some(Arc::new(ConsoleSink)),
            LightSinkChoice::None => None,
        };
        let sampler = sink.map(|sink| {
            spawn_sampler(light.clone(), sink, Some(hub), clock, config.light.sampler())
        });
        tracing::info!(config = ?config, "daemon started");
        Ok(Self {
            config,
            handle,
            light,
            sampler,
        })
    }
}

impl Drop for Daemon {
    fn drop(&mut self) {
        if let Some(task) = self.sampler.take() {
            task.abort();
        }
    }
}
