//! Phase-linked light feedback.
//!
//! The controller holds the current pattern; an independent sampler reads it
//! at a fixed rate and feeds a [`LightSink`].

use std::fs::{File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::Path;
use std::sync::{Arc, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use tokio::task::JoinHandle;
use tokio::time::Instant;

use crate::clock::{Clock, Timestamp};
use crate::error::{Error, Result, StorageError};
use crate::events::{EventBody, EventHub};

pub const SAMPLE_HZ: f64 = 30.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LightMode {
    Off,
    SteadyBright,
    Breathing,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LightPattern {
    pub mode: LightMode,
    pub b_min: f64,
    pub b_max: f64,
    pub period_s: f64,
}

impl LightPattern {
    pub fn new(mode: LightMode, b_min: f64, b_max: f64, period_s: f64) -> Result<Self> {
        let in_unit = |v: f64| (0.0..=1.0).contains(&v);
        if !(in_unit(b_min) && in_unit(b_max) && b_min < b_max) {
            return Err(Error::Config(format!(
                "light levels need 0 <= b_min < b_max <= 1, got {b_min}, {b_max}"
            )));
        }
        if !(period_s.is_finite() && period_s > 0.0) {
            return Err(Error::Config(format!("light period must be positive, got {period_s}")));
        }
        Ok(Self {
            mode,
            b_min,
            b_max,
            period_s,
        })
    }

    pub fn off() -> Self {
        Self::new(LightMode::Off, 0.0, 1.0, 1.0).expect("valid")
    }

    pub fn steady(level: f64) -> Result<Self> {
        Self::new(LightMode::SteadyBright, 0.0, level, 1.0)
    }

    pub fn breathing(b_min: f64, b_max: f64, period_s: f64) -> Result<Self> {
        Self::new(LightMode::Breathing, b_min, b_max, period_s)
    }
}

/// Brightness `t` seconds after the pattern started. Breathing is a raised
/// cosine starting at `b_min` and peaking at `b_max` half a period later.
pub fn brightness_at(pattern: &LightPattern, t: f64) -> f64 {
    match pattern.mode {
        LightMode::Off => 0.0,
        LightMode::SteadyBright => pattern.b_max,
        LightMode::Breathing => {
            let raised = (1.0 - (std::f64::consts::TAU * t.max(0.0) / pattern.period_s).cos()) / 2.0;
            (pattern.b_min + (pattern.b_max - pattern.b_min) * raised).clamp(pattern.b_min, pattern.b_max)
        }
    }
}

/// The pattern used for each phase.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LightScheme {
    pub request: LightPattern,
    pub conversation: LightPattern,
    pub idle: LightPattern,
    pub transformation: LightPattern,
}

impl Default for LightScheme {
    fn default() -> Self {
        Self {
            request: LightPattern::steady(1.0).expect("valid"),
            conversation: LightPattern::breathing(0.15, 0.9, 4.0).expect("valid"),
            idle: LightPattern::off(),
            transformation: LightPattern::off(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LightCommand {
    pub at: Timestamp,
    pub pattern: LightPattern,
}

struct Current {
    pattern: LightPattern,
    since: Instant,
}

pub struct LightController {
    current: Mutex<Current>,
    log: Mutex<Vec<LightCommand>>,
}

impl Default for LightController {
    fn default() -> Self {
        Self {
            current: Mutex::new(Current {
                pattern: LightPattern::off(),
                since: Instant::now(),
            }),
            log: Mutex::new(Vec::new()),
        }
    }
}

impl LightController {
    /// Records the command and restarts the waveform at t = 0.
    pub fn set(&self, pattern: LightPattern, at: Timestamp) {
        *self.current.lock().unwrap() = Current {
            pattern,
            since: Instant::now(),
        };
        self.log.lock().unwrap().push(LightCommand { at, pattern });
        tracing::debug!(mode = ?pattern.mode, "light pattern set");
    }

    pub fn pattern(&self) -> LightPattern {
        self.current.lock().unwrap().pattern
    }

    pub fn sample(&self) -> (LightPattern, f64) {
        let cur = self.current.lock().unwrap();
        let t = cur.since.elapsed().as_secs_f64();
        (cur.pattern, brightness_at(&cur.pattern, t))
    }

    pub fn command_log(&self) -> Vec<LightCommand> {
        self.log.lock().unwrap().clone()
    }
}

pub trait LightSink: Send + Sync {
    fn write(&self, at: Timestamp, brightness: f64);
}

/// Discards samples.
pub struct NullLightSink;

impl LightSink for NullLightSink {
    fn write(&self, _at: Timestamp, _brightness: f64) {}
}

/// Appends `<rfc3339> <brightness>` lines.
pub struct LogFileSink {
    out: Mutex<BufWriter<File>>,
}

impl LogFileSink {
    pub fn open(path: &Path) -> Result<Self> {
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir).map_err(|e| StorageError::io(dir, e))?;
        }
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|e| StorageError::io(path, e))?;
        Ok(Self {
            out: Mutex::new(BufWriter::new(file)),
        })
    }
}

impl LightSink for LogFileSink {
    fn write(&self, at: Timestamp, brightness: f64) {
        let mut out = self.out.lock().unwrap();
        let _ = writeln!(out, "{} {brightness:.4}", at.to_rfc3339());
        let _ = out.flush();
    }
}

/// Draws a one-line bar on stderr.
pub struct ConsoleSink;

impl LightSink for ConsoleSink {
    fn write(&self, _at: Timestamp, brightness: f64) {
        let width = 40;
        let lit = (brightness * width as f64).round() as usize;
        eprint!("\r[{}{}] {brightness:.2}", "#".repeat(lit), " ".repeat(width - lit.min(width)));
    }
}

/// Keeps samples in memory.
#[derive(Default)]
pub struct MemorySink {
    samples: Mutex<Vec<(Timestamp, f64)>>,
}

impl MemorySink {
    pub fn samples(&self) -> Vec<(Timestamp, f64)> {
        self.samples.lock().unwrap().clone()
    }
}

impl LightSink for MemorySink {
    fn write(&self, at: Timestamp, brightness: f64) {
        self.samples.lock().unwrap().push((at, brightness));
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplerConfig {
    pub hz: f64,
    /// Publish every n-th sample as an event; 0 disables events.
    pub publish_every: u32,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            hz: SAMPLE_HZ,
            publish_every: 3,
        }
    }
}

/// Runs until the returned task is aborted.
pub fn spawn_sampler(
    controller: Arc<LightController>,
    sink: Arc<dyn LightSink>,
    hub: Option<Arc<EventHub>>,
    clock: Arc<dyn Clock>,
    config: SamplerConfig,
) -> JoinHandle<()> {
    let period = Duration::from_secs_f64(1.0 / config.hz.max(1.0));
    tokio::spawn(async move {
        let mut ticker = tokio::time::interval(period);
        ticker.set_missed_tick_behavior(tokio::time::MissedTickBehavior::Skip);
        let mut n: u64 = 0;
        loop {
            ticker.tick().await;
            let (pattern, brightness) = controller.sample();
            sink.write(clock.now(), brightness);
            if let Some(hub) = &hub {
                if config.publish_every > 0 && n.is_multiple_of(u64::from(config.publish_every)) {
                    hub.publish(EventBody::LightSample {
                        mode: pattern.mode,
                        brightness,
                    });
                }
            }
            n += 1;
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clock::SystemClock;
    use crate::events::{Channel, EventKind};

    #[test]
    fn breathing_examples() {
        let p = LightPattern::breathing(0.15, 0.9, 4.0).unwrap();
        assert!((brightness_at(&p, 0.0) - 0.15).abs() < 1e-12);
        assert!((brightness_at(&p, 2.0) - 0.9).abs() < 1e-12);
        assert!((brightness_at(&p, 1.0) - 0.525).abs() < 1e-9);
        assert!((brightness_at(&p, 4.0) - 0.15).abs() < 1e-12);
    }

    #[test]
    fn fixed_modes() {
        assert_eq!(brightness_at(&LightPattern::off(), 3.0), 0.0);
        assert_eq!(brightness_at(&LightPattern::steady(0.8).unwrap(), 3.0), 0.8);
    }

    #[test]
    fn invalid_patterns_rejected() {
        assert!(LightPattern::breathing(0.9, 0.15, 4.0).is_err());
        assert!(LightPattern::breathing(0.1, 0.9, 0.0).is_err());
        assert!(LightPattern::breathing(0.1, 1.2, 4.0).is_err());
        assert!(LightPattern::breathing(0.5, 0.5, 4.0).is_err());
    }

    #[test]
    fn controller_logs_commands() {
        let c = LightController::default();
        let now = SystemClock.now();
        c.set(LightScheme::default().request, now);
        c.set(LightScheme::default().conversation, now);
        let modes: Vec<_> = c.command_log().iter().map(|l| l.pattern.mode).collect();
        assert_eq!(modes, vec![LightMode::SteadyBright, LightMode::Breathing]);
        assert_eq!(c.sample().0.mode, LightMode::Breathing);
    }

    #[tokio::test(start_paused = true)]
    async fn sampler_runs_at_rate() {
        let c = Arc::new(LightController::default());
        c.set(LightPattern::steady(0.7).unwrap(), SystemClock.now());
        let sink = Arc::new(MemorySink::default());
        let hub = Arc::new(EventHub::default());
        let task = spawn_sampler(
            c,
            sink.clone(),
            Some(hub.clone()),
            Arc::new(SystemClock),
            SamplerConfig::default(),
        );
        tokio::time::sleep(Duration::from_millis(1000)).await;
        task.abort();
        let n = sink.samples().len();
        assert!((30..=32).contains(&n), "{n} samples");
        assert!(sink.samples().iter().all(|(_, b)| *b == 0.7));
        let events = hub.history(Channel::Participant);
        assert!(events.iter().all(|e| e.kind() == EventKind::LightSample));
        assert!((10..=11).contains(&events.len()));
    }

    #[test]
    fn log_file_sink_writes_lines() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("light.log");
        let sink = LogFileSink::open(&path).unwrap();
        sink.write(SystemClock.now(), 0.5);
        sink.write(SystemClock.now(), 0.25);
        let text = std::fs::read_to_string(path).unwrap();
        assert_eq!(text.lines().count(), 2);
        assert!(text.lines().next().unwrap().ends_with(" 0.5000"));
    }
}
