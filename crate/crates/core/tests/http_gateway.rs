mod common;

use std::time::Duration;

use portal_core::config::AuthConfig;
use portal_core::events::{ApiEvent, Channel, EventKind};
use portal_core::gateway::http::{self, HttpState};
use portal_core::providers::mock::MockChat;
use portal_core::ritual::RitualPhase;
use serde_json::{json, Value};

use common::{canned, harness, Harness};

const OP: &str = "operator-secret";
const PART: &str = "participant-secret";

struct Server {
    base: String,
    client: reqwest::Client,
    _h: Harness,
}

async fn start(chat: MockChat) -> Server {
    let h = harness(chat, 11);
    let listener = http::bind("127.0.0.1:0").await.unwrap();
    let base = format!("http://{}", listener.local_addr().unwrap());
    let state = HttpState {
        handle: h.handle.clone(),
        auth: AuthConfig {
            participant_token: Some(PART.into()),
            operator_token: Some(OP.into()),
        },
        fixtures_dir: Some(h.fixtures.clone()),
    };
    tokio::spawn(http::serve(listener, state, std::future::pending()));
    Server {
        base,
        client: reqwest::Client::new(),
        _h: h,
    }
}

impl Server {
    async fn post(&self, path: &str, token: &str, body: Value) -> (u16, Value) {
        let resp = self
            .client
            .post(format!("{}{path}", self.base))
            .bearer_auth(token)
            .json(&body)
            .send()
            .await
            .unwrap();
        let status = resp.status().as_u16();
        (status, resp.json().await.unwrap())
    }

    async fn get(&self, path: &str, token: &str) -> (u16, Value) {
        let resp = self
            .client
            .get(format!("{}{path}", self.base))
            .bearer_auth(token)
            .send()
            .await
            .unwrap();
        let status = resp.status().as_u16();
        (status, resp.json().await.unwrap())
    }
}

/// Minimal server-sent-events reader.
struct SseReader {
    resp: reqwest::Response,
    buf: String,
}

impl SseReader {
    async fn open(base: &str, channel: Channel, token: &str, since: Option<u64>) -> Self {
        let mut url = format!("{base}/events?channel={}&token={token}", channel.as_str());
        if let Some(s) = since {
            url.push_str(&format!("&since={s}"));
        }
        let resp = reqwest::get(url).await.unwrap();
        assert_eq!(resp.status(), 200);
        Self {
            resp,
            buf: String::new(),
        }
    }

    async fn next(&mut self) -> Option<ApiEvent> {
        loop {
            if let Some(end) = self.buf.find("\n\n") {
                let block: String = self.buf.drain(..end + 2).collect();
                let data: String = block
                    .lines()
                    .filter_map(|l| l.strip_prefix("data:"))
                    .map(str::trim_start)
                    .collect();
                if data.is_empty() {
                    continue;
                }
                let event: ApiEvent = serde_json::from_str(&data).unwrap();
                let id = block.lines().find_map(|l| l.strip_prefix("id:")).unwrap().trim();
                assert_eq!(id, event.seq.to_string());
                return Some(event);
            }
            let chunk = tokio::time::timeout(Duration::from_secs(5), self.resp.chunk())
                .await
                .ok()?
                .unwrap()?;
            self.buf.push_str(std::str::from_utf8(&chunk).unwrap());
        }
    }

    /// Reads until a SessionClosed event has arrived.
    async fn until_closed(&mut self) -> Vec<ApiEvent> {
        let mut out = Vec::new();
        while let Some(e) = self.next().await {
            let done = e.kind() == EventKind::SessionClosed;
            out.push(e);
            if done {
                break;
            }
        }
        out
    }
}

fn phases(events: &[ApiEvent]) -> Vec<RitualPhase> {
    events
        .iter()
        .filter_map(|e| match &e.body {
            portal_core::events::EventBody::PhaseChanged { phase, .. } => Some(*phase),
            _ => None,
        })
        .collect()
}

#[tokio::test]
async fn full_session_over_http_and_sse() {
    let s = start(MockChat::scripted([
        r#"{"name":"Fox","traits":["sly","warm","old"],"speaking_style":"soft","backstory":"shelf","voice_id":"warm","mood_seed":"calm"}"#,
        "INNER: secret-alpha\nINTENT: 0.9\nSPEAK: yes\nRESPONSE: Hello!",
        "INNER: secret-beta\nINTENT: 0.1\nSPEAK: no\nRESPONSE:",
        "we met",
    ]))
    .await;
    let mut part = SseReader::open(&s.base, Channel::Participant, PART, None).await;
    let mut op = SseReader::open(&s.base, Channel::Operator, OP, None).await;

    let (st, body) = s.post("/session/awaken", PART, json!({"image_ref": "fox.png"})).await;
    assert_eq!(st, 200, "{body}");
    assert_eq!(body["was_new"], true);
    let (_, state) = s.get("/state", PART).await;
    assert_eq!(state["phase"], "Conversation");
    assert_eq!(state["session"]["object"]["name"], "Fox");

    let (st, body) = s.post("/session/utterance", PART, json!({"text": "hello"})).await;
    assert_eq!(st, 200);
    assert_eq!(body["appended"][1]["text"], "Hello!");
    assert!(body.get("inner_thoughts").is_none(), "participant response hides inner thoughts");

    let (_, body) = s.post("/session/utterance", OP, json!({"text": "still there?"})).await;
    assert_eq!(body["inner_thoughts"][0]["inner_thoughts"], "secret-beta");
    assert_eq!(body["appended"][1]["kind"], "silence");

    let (st, body) = s.post("/session/utterance", PART, json!({"text": "goodbye"})).await;
    assert_eq!(st, 200);
    assert!(body["closed"]["summary_ref"].is_string());

    let pe = part.until_closed().await;
    let oe = op.until_closed().await;

    // ordering and gap-free numbering on each connection
    for events in [&pe, &oe] {
        let seqs: Vec<u64> = events.iter().map(|e| e.seq).collect();
        assert_eq!(seqs, (1..=seqs.len() as u64).collect::<Vec<_>>());
        assert_eq!(
            phases(events),
            vec![
                RitualPhase::Request,
                RitualPhase::Conversation,
                RitualPhase::Transformation
            ]
        );
    }
    // goodbye: Transformation then SessionClosed
    let t = pe.iter().position(|e| matches!(&e.body, portal_core::events::EventBody::PhaseChanged { phase: RitualPhase::Transformation, .. })).unwrap();
    assert_eq!(pe.last().unwrap().kind(), EventKind::SessionClosed);
    assert!(t < pe.len() - 1);

    // isolation: participant never sees inner thoughts, operator sees one per turn
    assert!(pe.iter().all(|e| e.kind() != EventKind::InnerThoughts));
    let raw = serde_json::to_string(&pe).unwrap();
    assert!(!raw.contains("secret-alpha") && !raw.contains("secret-beta"));
    assert_eq!(oe.iter().filter(|e| e.kind() == EventKind::InnerThoughts).count(), 2);

    // every transcript append is seen exactly once, in index order
    let indices = |events: &[ApiEvent]| -> Vec<usize> {
        events
            .iter()
            .filter_map(|e| match &e.body {
                portal_core::events::EventBody::TranscriptAppended { index, .. } => Some(*index),
                _ => None,
            })
            .collect()
    };
    assert_eq!(indices(&pe), (0..6).collect::<Vec<_>>());
    assert_eq!(indices(&oe), indices(&pe));

    // the final Idle change follows the close
    let idle = part.next().await.unwrap();
    assert!(matches!(idle.body, portal_core::events::EventBody::PhaseChanged { phase: RitualPhase::Idle, .. }));

    // a reconnecting client resumes without gaps or duplicates
    let mut resumed = SseReader::open(&s.base, Channel::Participant, PART, Some(3)).await;
    let first = resumed.next().await.unwrap();
    assert_eq!(first.seq, 4);
}

#[tokio::test]
async fn errors_are_structured() {
    let s = start(canned()).await;
    let (st, body) = s.post("/session/utterance", PART, json!({"text": "hello"})).await;
    assert_eq!(st, 409);
    assert_eq!(body["error"]["code"], "no_active_session");

    let (st, body) = s.post("/session/goodbye", PART, json!({})).await;
    assert_eq!(st, 409, "{body}");

    let (st, body) = s.get("/objects", PART).await;
    assert_eq!(st, 401);
    assert_eq!(body["error"]["code"], "unauthorized");

    let (st, _) = s.get("/state", "wrong").await;
    assert_eq!(st, 401);

    let (st, body) = s.post("/session/utterance", PART, json!({"txt": "x"})).await;
    assert_eq!(st, 400);
    assert_eq!(body["error"]["code"], "bad_request");

    let (st, _) = s.post("/session/awaken", PART, json!({"image_ref": "../secret.png"})).await;
    assert_eq!(st, 400);
    let (st, body) = s.post("/session/awaken", PART, json!({"image_ref": "missing.png"})).await;
    assert_eq!(st, 404);
    assert_eq!(body["error"]["code"], "unknown_image");

    // no camera configured and no image given
    let (st, body) = s.post("/session/awaken", PART, json!({})).await;
    assert_eq!(st, 503);
    assert_eq!(body["error"]["code"], "camera_unavailable");

    let (st, body) = s.get("/objects/nope/memories", OP).await;
    assert_eq!(st, 404);
    assert_eq!(body["error"]["code"], "unknown_object");

    let (st, _) = s.get("/nowhere", OP).await;
    assert_eq!(st, 404);

    let resp = reqwest::get(format!("{}/events?channel=operator&token={PART}", s.base)).await.unwrap();
    assert_eq!(resp.status(), 401);
}

#[tokio::test]
async fn objects_and_memories() {
    let s = start(canned()).await;
    let (_, objects) = s.get("/objects", OP).await;
    assert_eq!(objects["objects"], json!([]));

    for fixture in ["fox.png", "kettle.png"] {
        let (st, _) = s.post("/session/awaken", PART, json!({"image_ref": fixture})).await;
        assert_eq!(st, 200);
        s.post("/session/utterance", PART, json!({"text": "tell me about the rain"})).await;
        s.post("/session/goodbye", PART, json!({})).await;
    }
    let (_, objects) = s.get("/objects", OP).await;
    let list = objects["objects"].as_array().unwrap();
    assert_eq!(list.len(), 2);
    assert!(list[0].get("embedding").is_none());

    let id = list[0]["object_id"].as_str().unwrap();
    let (st, mem) = s.get(&format!("/objects/{id}/memories?mode=history"), OP).await;
    assert_eq!(st, 200);
    let texts: Vec<&str> = mem["memories"].as_array().unwrap().iter().map(|m| m["text"].as_str().unwrap()).collect();
    assert_eq!(texts.len(), 3);
    assert_eq!(texts[0], "tell me about the rain");
    assert!(texts[2].starts_with("[summary]"));

    let (st, mem) = s
        .get(&format!("/objects/{id}/memories?mode=search&q=tell%20me%20about%20the%20rain&limit=1"), OP)
        .await;
    assert_eq!(st, 200);
    let top = &mem["memories"][0];
    assert_eq!(top["text"], "tell me about the rain");
    assert!((top["score"].as_f64().unwrap() - 1.0).abs() < 1e-6);

    let (st, _) = s.get(&format!("/objects/{id}/memories?mode=search"), OP).await;
    assert_eq!(st, 400);
}

#[tokio::test]
async fn awaken_with_inline_image_and_second_awaken_is_noop() {
    use base64::Engine as _;
    let s = start(canned()).await;
    let img = base64::engine::general_purpose::STANDARD.encode(b"\x89PNG\r\n\x1a\nlamp");
    let (st, body) = s.post("/session/awaken", PART, json!({"image_base64": img})).await;
    assert_eq!(st, 200, "{body}");
    let session = body["session_id"].clone();
    let (st, body) = s.post("/session/awaken", PART, json!({"image_ref": "fox.png"})).await;
    assert_eq!(st, 200);
    assert_eq!(body["noop"], true);
    assert_eq!(body["session_id"], session);
}

#[tokio::test]
async fn busy_port_is_a_startup_error() {
    let first = http::bind("127.0.0.1:0").await.unwrap();
    let addr = first.local_addr().unwrap().to_string();
    assert!(matches!(http::bind(&addr).await, Err(portal_core::Error::Config(_))));
}
