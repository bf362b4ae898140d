//! Synthetic inputs for the portal benchmarks.

use chrono::Duration;
use portal_core::clock::{Clock, StepClock};
use portal_core::dialogue::TwoTierTurn;
use portal_core::identity::{ObjectProfile, Persona};
use portal_core::memory::{MemoryRecord, Speaker};
use portal_core::providers::mock::hash_unit_vector;

pub fn persona() -> Persona {
    Persona {
        name: "Kettle".into(),
        traits: vec!["stubborn".into(), "warm".into(), "dented".into()],
        speaking_style: "short, whistling sentences".into(),
        backstory: "boiled water for three households".into(),
        voice_id: "gravelly".into(),
        mood_seed: "content".into(),
    }
}

/// `n` objects with distinct unit embeddings, one second apart.
pub fn registry(n: usize, dim: usize) -> Vec<ObjectProfile> {
    let start = StepClock::fixed().now();
    (0..n)
        .map(|i| {
            let at = start + Duration::seconds(i as i64);
            ObjectProfile {
                object_id: format!("obj-{i}"),
                description: format!("object number {i}"),
                persona: persona(),
                embedding: hash_unit_vector("image", format!("obj:{i}").as_bytes(), dim),
                created_at: at,
                last_seen_at: at,
                image_refs: Vec::new(),
            }
        })
        .collect()
}

/// `n` memories of one object, alternating speakers.
pub fn memories(n: usize, dim: usize) -> Vec<MemoryRecord> {
    let start = StepClock::fixed().now();
    (0..n)
        .map(|i| MemoryRecord {
            memory_id: format!("mem-{i}"),
            object_id: "obj-0".into(),
            session_id: format!("session-{}", i / 10),
            speaker: if i % 2 == 0 { Speaker::Human } else { Speaker::Object },
            text: format!("remembered line {i}"),
            embedding: hash_unit_vector("text", format!("mem:{i}").as_bytes(), dim),
            created_at: start + Duration::milliseconds(i as i64),
        })
        .collect()
}

pub fn reply(response_words: usize) -> String {
    let response = vec!["steam"; response_words].join(" ");
    TwoTierTurn::new("They came back. I think I know them.", 0.75, true, response)
        .expect("valid turn")
        .format()
}
