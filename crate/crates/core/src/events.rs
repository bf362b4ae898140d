//! Event fan-out to connected observers.
//!
//! Two channels split the covert and public tiers at the transport level:
//! `operator` sees everything, `participant` never sees inner thoughts. Each
//! channel numbers its own events with a gap-free sequence and keeps a bounded
//! history so a reconnecting client can resume after the last seq it saw.
//! Subscribers get a bounded queue; a subscriber whose queue is full is
//! dropped rather than allowed to stall the publisher.

use std::collections::VecDeque;
use std::str::FromStr;
use std::sync::Mutex;

use chrono::Utc;
use serde::{Deserialize, Serialize};
use tokio::sync::mpsc;

use crate::clock::Timestamp;
use crate::ritual::light::LightMode;
use crate::ritual::RitualPhase;
use crate::transcript::{InnerThoughtsEntry, TranscriptEntry};

pub const DEFAULT_HISTORY: usize = 4096;
pub const DEFAULT_SUBSCRIBER_BUFFER: usize = 1024;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Channel {
    Participant,
    Operator,
}

impl Channel {
    pub const ALL: [Channel; 2] = [Channel::Participant, Channel::Operator];

    pub fn as_str(self) -> &'static str {
        match self {
            Channel::Participant => "participant",
            Channel::Operator => "operator",
        }
    }

    fn index(self) -> usize {
        self as usize
    }
}

impl FromStr for Channel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "participant" => Ok(Channel::Participant),
            "operator" => Ok(Channel::Operator),
            other => Err(format!("unknown channel {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EventKind {
    PhaseChanged,
    TranscriptAppended,
    InnerThoughts,
    LightSample,
    ObjectBound,
    SessionClosed,
}

impl EventKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EventKind::PhaseChanged => "PhaseChanged",
            EventKind::TranscriptAppended => "TranscriptAppended",
            EventKind::InnerThoughts => "InnerThoughts",
            EventKind::LightSample => "LightSample",
            EventKind::ObjectBound => "ObjectBound",
            EventKind::SessionClosed => "SessionClosed",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "payload")]
pub enum EventBody {
    PhaseChanged {
        phase: RitualPhase,
        session_id: Option<String>,
    },
    TranscriptAppended {
        session_id: String,
        index: usize,
        entry: TranscriptEntry,
    },
    InnerThoughts {
        session_id: String,
        entry: InnerThoughtsEntry,
    },
    LightSample {
        mode: LightMode,
        brightness: f64,
    },
    ObjectBound {
        session_id: String,
        object_id: String,
        name: String,
        description: String,
        traits: Vec<String>,
        was_new: bool,
    },
    SessionClosed {
        session_id: String,
        object_id: Option<String>,
        summary_ref: Option<String>,
        summary_skipped: bool,
        aborted: bool,
    },
}

impl EventBody {
    pub fn kind(&self) -> EventKind {
        match self {
            EventBody::PhaseChanged { .. } => EventKind::PhaseChanged,
            EventBody::TranscriptAppended { .. } => EventKind::TranscriptAppended,
            EventBody::InnerThoughts { .. } => EventKind::InnerThoughts,
            EventBody::LightSample { .. } => EventKind::LightSample,
            EventBody::ObjectBound { .. } => EventKind::ObjectBound,
            EventBody::SessionClosed { .. } => EventKind::SessionClosed,
        }
    }

    pub fn visible_on(&self, channel: Channel) -> bool {
        channel == Channel::Operator || self.kind() != EventKind::InnerThoughts
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApiEvent {
    pub seq: u64,
    pub ts: Timestamp,
    #[serde(flatten)]
    pub body: EventBody,
}

impl ApiEvent {
    pub fn kind(&self) -> EventKind {
        self.body.kind()
    }
}

#[derive(Default)]
struct ChannelState {
    last_seq: u64,
    history: VecDeque<ApiEvent>,
    subscribers: Vec<mpsc::Sender<ApiEvent>>,
}

pub struct Subscription {
    /// Events after the requested seq that were still in history.
    pub backlog: Vec<ApiEvent>,
    /// True if the requested resume point had already been evicted.
    pub truncated: bool,
    pub receiver: mpsc::Receiver<ApiEvent>,
}

pub struct EventHub {
    channels: Mutex<[ChannelState; 2]>,
    history_cap: usize,
    buffer: usize,
}

impl Default for EventHub {
    fn default() -> Self {
        Self::new(DEFAULT_HISTORY, DEFAULT_SUBSCRIBER_BUFFER)
    }
}

impl EventHub {
    pub fn new(history_cap: usize, buffer: usize) -> Self {
        Self {
            channels: Mutex::new(Default::default()),
            history_cap: history_cap.max(1),
            buffer: buffer.max(1),
        }
    }

    pub fn publish(&self, body: EventBody) {
        let ts = Utc::now();
        let mut channels = self.channels.lock().unwrap();
        for channel in Channel::ALL {
            if !body.visible_on(channel) {
                continue;
            }
            let state = &mut channels[channel.index()];
            state.last_seq += 1;
            let event = ApiEvent {
                seq: state.last_seq,
                ts,
                body: body.clone(),
            };
            state.subscribers.retain(|tx| match tx.try_send(event.clone()) {
                Ok(()) => true,
                Err(mpsc::error::TrySendError::Full(_)) => {
                    tracing::warn!(channel = channel.as_str(), "dropping slow subscriber");
                    false
                }
                Err(mpsc::error::TrySendError::Closed(_)) => false,
            });
            if state.history.len() == self.history_cap {
                state.history.pop_front();
            }
            state.history.push_back(event);
        }
    }

    /// Registers a subscriber. Backlog and live stream are split under one
    /// lock, so together they contain every event after `since` exactly once.
    pub fn subscribe(&self, channel: Channel, since: Option<u64>) -> Subscription {
        let (tx, receiver) = mpsc::channel(self.buffer);
        let mut channels = self.channels.lock().unwrap();
        let state = &mut channels[channel.index()];
        let (backlog, truncated) = match since {
            None => (Vec::new(), false),
            Some(after) => {
                let backlog: Vec<ApiEvent> =
                    state.history.iter().filter(|e| e.seq > after).cloned().collect();
                let first_kept = state.history.front().map_or(state.last_seq + 1, |e| e.seq);
                (backlog, after + 1 < first_kept)
            }
        };
        state.subscribers.push(tx);
        Subscription {
            backlog,
            truncated,
            receiver,
        }
    }

    pub fn last_seq(&self, channel: Channel) -> u64 {
        self.channels.lock().unwrap()[channel.index()].last_seq
    }

    pub fn history(&self, channel: Channel) -> Vec<ApiEvent> {
        self.channels.lock().unwrap()[channel.index()].history.iter().cloned().collect()
    }

    pub fn subscriber_count(&self, channel: Channel) -> usize {
        let mut channels = self.channels.lock().unwrap();
        let state = &mut channels[channel.index()];
        state.subscribers.retain(|tx| !tx.is_closed());
        state.subscribers.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clock::{Clock, StepClock};

    fn inner() -> EventBody {
        EventBody::InnerThoughts {
            session_id: "s".into(),
            entry: InnerThoughtsEntry {
                at: StepClock::fixed().now(),
                turn: 1,
                inner_thoughts: "secret".into(),
                engagement_intent: 0.5,
                speak: true,
            },
        }
    }

    fn phase(p: RitualPhase) -> EventBody {
        EventBody::PhaseChanged {
            phase: p,
            session_id: None,
        }
    }

    #[test]
    fn channels_number_independently_and_isolate_inner() {
        let hub = EventHub::default();
        let mut p = hub.subscribe(Channel::Participant, None);
        let mut o = hub.subscribe(Channel::Operator, None);
        hub.publish(phase(RitualPhase::Request));
        hub.publish(inner());
        hub.publish(phase(RitualPhase::Idle));
        let drain = |rx: &mut mpsc::Receiver<ApiEvent>| {
            let mut v = Vec::new();
            while let Ok(e) = rx.try_recv() {
                v.push(e);
            }
            v
        };
        let pe = drain(&mut p.receiver);
        let oe = drain(&mut o.receiver);
        assert_eq!(pe.iter().map(|e| e.seq).collect::<Vec<_>>(), vec![1, 2]);
        assert_eq!(oe.iter().map(|e| e.seq).collect::<Vec<_>>(), vec![1, 2, 3]);
        assert!(pe.iter().all(|e| e.kind() != EventKind::InnerThoughts));
        assert_eq!(oe[1].kind(), EventKind::InnerThoughts);
    }

    #[test]
    fn resume_has_no_gaps_or_duplicates() {
        let hub = EventHub::new(3, 8);
        for _ in 0..5 {
            hub.publish(phase(RitualPhase::Idle));
        }
        let sub = hub.subscribe(Channel::Participant, Some(3));
        assert_eq!(sub.backlog.iter().map(|e| e.seq).collect::<Vec<_>>(), vec![4, 5]);
        assert!(!sub.truncated);
        let sub = hub.subscribe(Channel::Participant, Some(0));
        assert!(sub.truncated);
        assert_eq!(sub.backlog.len(), 3);
        let mut live = hub.subscribe(Channel::Participant, Some(5));
        assert!(live.backlog.is_empty());
        hub.publish(phase(RitualPhase::Request));
        assert_eq!(live.receiver.try_recv().unwrap().seq, 6);
    }

    #[test]
    fn slow_subscriber_is_dropped() {
        let hub = EventHub::new(16, 2);
        let _slow = hub.subscribe(Channel::Operator, None);
        for _ in 0..3 {
            hub.publish(phase(RitualPhase::Idle));
        }
        assert_eq!(hub.subscriber_count(Channel::Operator), 0);
        assert_eq!(hub.last_seq(Channel::Operator), 3);
    }

    #[test]
    fn event_json_shape() {
        let hub = EventHub::default();
        hub.publish(phase(RitualPhase::Conversation));
        let v = serde_json::to_value(&hub.history(Channel::Operator)[0]).unwrap();
        assert_eq!(v["seq"], 1);
        assert_eq!(v["kind"], "PhaseChanged");
        assert_eq!(v["payload"]["phase"], "Conversation");
    }
}
