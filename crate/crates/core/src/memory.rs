//! Per-object episodic memory.
//!
//! Turns are stored with a text embedding and can be recalled two ways:
//! chronologically (the most recent `limit`, oldest first) or by relevance
//! (cosine similarity to an embedded query, best first, newer wins ties).

use std::cmp::Ordering;
use std::collections::HashMap;
use std::sync::{Arc, Mutex, RwLock};

use serde::{Deserialize, Serialize};

use crate::clock::{strictly_after, Clock, IdGen, Timestamp};
use crate::embedding::{cosine_similarity, Embedding};
use crate::error::{Error, Result};
use crate::identity::Registry;
use crate::persistence::Store;
use crate::prompts::Template;
use crate::providers::{ChatMessage, ChatRequest, ProviderSet, ResponseSchema};

pub const SUMMARY_PREFIX: &str = "[summary]";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Speaker {
    Human,
    Object,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemoryRecord {
    pub memory_id: String,
    pub object_id: String,
    pub session_id: String,
    pub speaker: Speaker,
    pub text: String,
    pub embedding: Embedding,
    pub created_at: Timestamp,
}

impl MemoryRecord {
    pub fn is_summary(&self) -> bool {
        self.text.starts_with(SUMMARY_PREFIX)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MemoryMode {
    History,
    Search,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MemoryQuery {
    pub mode: MemoryMode,
    pub object_id: String,
    pub limit: usize,
    pub query_text: Option<String>,
}

impl MemoryQuery {
    pub fn validate(&self) -> Result<()> {
        if self.limit == 0 {
            return Err(Error::usage("limit must be at least 1"));
        }
        if self.mode == MemoryMode::Search
            && self.query_text.as_deref().is_none_or(|q| q.trim().is_empty())
        {
            return Err(Error::usage("search requires a non-empty query"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScoredMemory {
    pub record: MemoryRecord,
    pub score: f64,
}

/// Best-first by score; equal scores put the newer record first.
pub fn rank_by_relevance(
    query: &Embedding,
    records: &[MemoryRecord],
    limit: usize,
) -> Result<Vec<ScoredMemory>> {
    let mut scored = records
        .iter()
        .map(|r| {
            Ok(ScoredMemory {
                score: cosine_similarity(query, &r.embedding)?,
                record: r.clone(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    scored.sort_by(|a, b| {
        b.score
            .partial_cmp(&a.score)
            .unwrap_or(Ordering::Equal)
            .then_with(|| b.record.created_at.cmp(&a.record.created_at))
    });
    scored.truncate(limit);
    Ok(scored)
}

pub struct MemoryStore {
    store: Arc<Store>,
    registry: Arc<Registry>,
    clock: Arc<dyn Clock>,
    ids: Arc<dyn IdGen>,
    records: RwLock<HashMap<String, Vec<MemoryRecord>>>,
    write: Mutex<()>,
}

impl MemoryStore {
    pub fn load(
        store: Arc<Store>,
        registry: Arc<Registry>,
        clock: Arc<dyn Clock>,
        ids: Arc<dyn IdGen>,
    ) -> Result<Self> {
        let loaded = store.load_memories()?;
        let mut records: HashMap<String, Vec<MemoryRecord>> = HashMap::new();
        for r in loaded.records {
            records.entry(r.object_id.clone()).or_default().push(r);
        }
        for list in records.values_mut() {
            list.sort_by_key(|r| r.created_at);
        }
        Ok(Self {
            store,
            registry,
            clock,
            ids,
            records: RwLock::new(records),
            write: Mutex::new(()),
        })
    }

    /// Embeds and persists one turn. `created_at` is strictly increasing per
    /// object even if the clock stalls.
    pub async fn store_memory(
        &self,
        object_id: &str,
        session_id: &str,
        speaker: Speaker,
        text: &str,
        providers: &ProviderSet,
    ) -> Result<MemoryRecord> {
        if text.trim().is_empty() {
            return Err(Error::usage("memory text must be non-empty"));
        }
        if !self.registry.contains(object_id) {
            return Err(Error::usage(format!("unknown object_id {object_id}")));
        }
        let embedding = providers.embed_text(text).await?;
        let _w = self.write.lock().unwrap();
        let last = self
            .records
            .read()
            .unwrap()
            .get(object_id)
            .and_then(|l| l.last())
            .map(|r| r.created_at);
        let record = MemoryRecord {
            memory_id: self.ids.next_id(),
            object_id: object_id.to_string(),
            session_id: session_id.to_string(),
            speaker,
            text: text.to_string(),
            embedding,
            created_at: strictly_after(self.clock.now(), last),
        };
        self.store.append_memory(&record)?;
        self.records
            .write()
            .unwrap()
            .entry(object_id.to_string())
            .or_default()
            .push(record.clone());
        Ok(record)
    }

    pub fn all_for(&self, object_id: &str) -> Vec<MemoryRecord> {
        self.records
            .read()
            .unwrap()
            .get(object_id)
            .cloned()
            .unwrap_or_default()
    }

    /// The `limit` most recent records, oldest first.
    pub fn retrieve_history(&self, object_id: &str, limit: usize) -> Result<Vec<MemoryRecord>> {
        if limit == 0 {
            return Err(Error::usage("limit must be at least 1"));
        }
        let guard = self.records.read().unwrap();
        let Some(list) = guard.get(object_id) else {
            return Ok(Vec::new());
        };
        Ok(list[list.len().saturating_sub(limit)..].to_vec())
    }

    pub async fn retrieve_relevant(
        &self,
        object_id: &str,
        query_text: &str,
        limit: usize,
        providers: &ProviderSet,
    ) -> Result<Vec<ScoredMemory>> {
        if query_text.trim().is_empty() {
            return Err(Error::usage("search requires a non-empty query"));
        }
        if limit == 0 {
            return Err(Error::usage("limit must be at least 1"));
        }
        let query = providers.embed_text(query_text).await?;
        let records = self.all_for(object_id);
        rank_by_relevance(&query, &records, limit)
    }

    /// History results carry no score.
    pub async fn query(
        &self,
        q: &MemoryQuery,
        providers: &ProviderSet,
    ) -> Result<Vec<(MemoryRecord, Option<f64>)>> {
        q.validate()?;
        Ok(match q.mode {
            MemoryMode::History => self
                .retrieve_history(&q.object_id, q.limit)?
                .into_iter()
                .map(|r| (r, None))
                .collect(),
            MemoryMode::Search => self
                .retrieve_relevant(
                    &q.object_id,
                    q.query_text.as_deref().unwrap_or_default(),
                    q.limit,
                    providers,
                )
                .await?
                .into_iter()
                .map(|s| (s.record, Some(s.score)))
                .collect(),
        })
    }

    /// Condenses a session's turns into one `[summary] ...` memory.
    pub async fn summarize_session(
        &self,
        object_id: &str,
        session_id: &str,
        persona_name: &str,
        template: &Template,
        providers: &ProviderSet,
    ) -> Result<MemoryRecord> {
        let turns: Vec<MemoryRecord> = self
            .all_for(object_id)
            .into_iter()
            .filter(|r| r.session_id == session_id && !r.is_summary())
            .collect();
        if turns.is_empty() {
            return Err(Error::usage("cannot summarize an empty session"));
        }
        let transcript = turns
            .iter()
            .map(|r| {
                let who = match r.speaker {
                    Speaker::Human => "Visitor",
                    Speaker::Object => persona_name,
                };
                format!("{who}: {}", r.text)
            })
            .collect::<Vec<_>>()
            .join("\n");
        let req = ChatRequest {
            system_prompt: template.render(&[("name", persona_name)]),
            messages: vec![ChatMessage::user(transcript)],
            response_schema: ResponseSchema::FreeText,
        };
        let summary = providers.chat(&req).await?;
        let text = format!("{SUMMARY_PREFIX} {}", summary.trim());
        self.store_memory(object_id, session_id, Speaker::Object, &text, providers)
            .await
    }
}
