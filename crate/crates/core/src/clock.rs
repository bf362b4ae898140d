//! Time and identifier sources.
//!
//! Everything that stamps a record or mints an id goes through these traits so
//! that a whole ritual can be replayed byte-for-byte with [`StepClock`] and
//! [`SeededIds`].

use std::sync::atomic::{AtomicI64, Ordering};
use std::sync::Mutex;

use chrono::{DateTime, Duration, TimeZone, Utc};
use rand::RngCore;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use uuid::Uuid;

pub type Timestamp = DateTime<Utc>;

pub trait Clock: Send + Sync {
    fn now(&self) -> Timestamp;
}

#[derive(Debug, Default, Clone, Copy)]
pub struct SystemClock;

impl Clock for SystemClock {
    fn now(&self) -> Timestamp {
        Utc::now()
    }
}

/// Deterministic clock: every call returns the previous reading plus a fixed step.
#[derive(Debug)]
pub struct StepClock {
    next_micros: AtomicI64,
    step_micros: i64,
}

impl StepClock {
    pub fn new(start: Timestamp, step: Duration) -> Self {
        Self {
            next_micros: AtomicI64::new(start.timestamp_micros()),
            step_micros: step.num_microseconds().unwrap_or(1000).max(1),
        }
    }

    /// 2025-01-01T00:00:00Z, advancing one millisecond per reading.
    pub fn fixed() -> Self {
        Self::new(
            Utc.with_ymd_and_hms(2025, 1, 1, 0, 0, 0).unwrap(),
            Duration::milliseconds(1),
        )
    }
}

impl Clock for StepClock {
    fn now(&self) -> Timestamp {
        let micros = self.next_micros.fetch_add(self.step_micros, Ordering::SeqCst);
        Utc.timestamp_micros(micros).unwrap()
    }
}

/// Smallest increment used to keep per-stream timestamps strictly increasing.
pub fn tick() -> Duration {
    Duration::microseconds(1)
}

/// `now` if it is strictly after `prev`, otherwise `prev` plus one tick.
pub fn strictly_after(now: Timestamp, prev: Option<Timestamp>) -> Timestamp {
    match prev {
        Some(p) if now <= p => p + tick(),
        _ => now,
    }
}

pub trait IdGen: Send + Sync {
    fn next_uuid(&self) -> Uuid;

    fn next_id(&self) -> String {
        self.next_uuid().to_string()
    }
}

#[derive(Debug, Default, Clone, Copy)]
pub struct RandomIds;

impl IdGen for RandomIds {
    fn next_uuid(&self) -> Uuid {
        Uuid::new_v4()
    }
}

/// UUIDv4-formatted ids drawn from a seeded stream.
#[derive(Debug)]
pub struct SeededIds {
    rng: Mutex<ChaCha8Rng>,
}

impl SeededIds {
    pub fn new(seed: u64) -> Self {
        Self {
            rng: Mutex::new(ChaCha8Rng::seed_from_u64(seed)),
        }
    }
}

impl IdGen for SeededIds {
    fn next_uuid(&self) -> Uuid {
        let mut bytes = [0u8; 16];
        self.rng.lock().unwrap().fill_bytes(&mut bytes);
        uuid::Builder::from_random_bytes(bytes).into_uuid()
    }
}
