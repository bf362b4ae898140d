//! HTTP + server-sent events interface.
//!
//! Every mutating request goes through the [`EngineHandle`] queue; event
//! streams are fed by the hub with per-client bounded buffers.

use std::collections::HashMap;
use std::convert::Infallible;
use std::net::SocketAddr;
use std::path::{Component, Path, PathBuf};

use axum::body::Bytes;
use axum::extract::{Path as UrlPath, Query, State};
use axum::http::{HeaderMap, StatusCode};
use axum::response::sse::{Event, KeepAlive, Sse};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine as _;
use futures::stream::{self, Stream, StreamExt};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::json;
use tokio::net::TcpListener;

use crate::clock::Timestamp;
use crate::config::AuthConfig;
use crate::error::Error;
use crate::events::{ApiEvent, Channel};
use crate::identity::{ObjectProfile, Persona};
use crate::memory::{MemoryMode, MemoryQuery, MemoryRecord, Speaker};
use crate::providers::{ImageMime, VisionRequest};
use crate::ritual::devices::load_image;

use super::EngineHandle;

pub const DEFAULT_MEMORY_LIMIT: usize = 20;

#[derive(Clone)]
pub struct HttpState {
    pub handle: EngineHandle,
    pub auth: AuthConfig,
    pub fixtures_dir: Option<PathBuf>,
}

#[derive(Debug)]
pub struct ApiError {
    pub status: StatusCode,
    pub code: &'static str,
    pub message: String,
}

impl ApiError {
    fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        Self {
            status,
            code,
            message: message.into(),
        }
    }

    fn bad_request(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, "bad_request", message)
    }
}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        let (status, code) = match &e {
            Error::NoActiveSession => (StatusCode::CONFLICT, "no_active_session"),
            Error::UnknownObject(_) => (StatusCode::NOT_FOUND, "unknown_object"),
            Error::Usage(_) => (StatusCode::BAD_REQUEST, "bad_request"),
            Error::Camera(_) => (StatusCode::SERVICE_UNAVAILABLE, "camera_unavailable"),
            Error::Provider(_) | Error::PersonaGeneration(_) => (StatusCode::BAD_GATEWAY, "provider_error"),
            Error::EngineStopped => (StatusCode::SERVICE_UNAVAILABLE, "engine_stopped"),
            Error::Storage(_) | Error::Config(_) => (StatusCode::INTERNAL_SERVER_ERROR, "internal"),
        };
        Self::new(status, code, e.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = json!({ "error": { "code": self.code, "message": self.message } });
        (self.status, Json(body)).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

fn presented_token(headers: &HeaderMap, query: &HashMap<String, String>) -> Option<String> {
    headers
        .get(axum::http::header::AUTHORIZATION)
        .and_then(|v| v.to_str().ok())
        .and_then(|v| v.strip_prefix("Bearer "))
        .map(|t| t.trim().to_string())
        .or_else(|| query.get("token").cloned())
}

/// A channel without a configured token is open. The operator token also
/// grants participant access.
fn authorize(auth: &AuthConfig, token: Option<&str>, channel: Channel) -> ApiResult<()> {
    let matches = |want: &Option<String>| want.as_deref().is_some_and(|w| Some(w) == token);
    let ok = match channel {
        Channel::Participant => auth.participant_token.is_none() || matches(&auth.participant_token) || matches(&auth.operator_token),
        Channel::Operator => auth.operator_token.is_none() || matches(&auth.operator_token),
    };
    if ok {
        Ok(())
    } else {
        Err(ApiError::new(
            StatusCode::UNAUTHORIZED,
            "unauthorized",
            format!("a valid {} token is required", channel.as_str()),
        ))
    }
}

/// The channel whose view a caller gets in responses.
fn caller_channel(auth: &AuthConfig, token: Option<&str>) -> Channel {
    match &auth.operator_token {
        Some(op) if Some(op.as_str()) == token => Channel::Operator,
        _ => Channel::Participant,
    }
}

fn parse_channel(query: &HashMap<String, String>) -> ApiResult<Channel> {
    query
        .get("channel")
        .map(|c| c.parse().map_err(ApiError::bad_request))
        .unwrap_or(Ok(Channel::Participant))
}

fn parse_body<T: DeserializeOwned + Default>(body: &Bytes) -> ApiResult<T> {
    if body.iter().all(u8::is_ascii_whitespace) {
        return Ok(T::default());
    }
    serde_json::from_slice(body).map_err(|e| ApiError::bad_request(format!("invalid JSON body: {e}")))
}

/// Resolves `image_ref` below `root`, refusing anything that could escape it.
pub fn resolve_fixture(root: &Path, image_ref: &str) -> ApiResult<PathBuf> {
    let rel = Path::new(image_ref);
    if image_ref.is_empty() || !rel.components().all(|c| matches!(c, Component::Normal(_))) {
        return Err(ApiError::bad_request(format!("invalid image_ref {image_ref:?}")));
    }
    Ok(root.join(rel))
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct AwakenBody {
    image_ref: Option<String>,
    image_base64: Option<String>,
    mime: Option<String>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct UtteranceBody {
    text: Option<String>,
}

#[derive(Debug, Serialize)]
struct ObjectView {
    object_id: String,
    description: String,
    persona: Persona,
    created_at: Timestamp,
    last_seen_at: Timestamp,
    image_refs: Vec<String>,
}

impl From<ObjectProfile> for ObjectView {
    fn from(p: ObjectProfile) -> Self {
        Self {
            object_id: p.object_id,
            description: p.description,
            persona: p.persona,
            created_at: p.created_at,
            last_seen_at: p.last_seen_at,
            image_refs: p.image_refs,
        }
    }
}

#[derive(Debug, Serialize)]
struct MemoryView {
    memory_id: String,
    session_id: String,
    speaker: Speaker,
    text: String,
    created_at: Timestamp,
    #[serde(skip_serializing_if = "Option::is_none")]
    score: Option<f64>,
}

impl From<(MemoryRecord, Option<f64>)> for MemoryView {
    fn from((r, score): (MemoryRecord, Option<f64>)) -> Self {
        Self {
            memory_id: r.memory_id,
            session_id: r.session_id,
            speaker: r.speaker,
            text: r.text,
            created_at: r.created_at,
            score,
        }
    }
}

type Q = Query<HashMap<String, String>>;

async fn get_state(State(s): State<HttpState>, headers: HeaderMap, Query(q): Q) -> ApiResult<Response> {
    let channel = parse_channel(&q)?;
    authorize(&s.auth, presented_token(&headers, &q).as_deref(), channel)?;
    Ok(Json(s.handle.snapshot(channel).await?).into_response())
}

async fn get_objects(State(s): State<HttpState>, headers: HeaderMap, Query(q): Q) -> ApiResult<Response> {
    authorize(&s.auth, presented_token(&headers, &q).as_deref(), Channel::Operator)?;
    let objects: Vec<ObjectView> = s.handle.objects().await?.into_iter().map(Into::into).collect();
    Ok(Json(json!({ "objects": objects })).into_response())
}

async fn get_memories(
    State(s): State<HttpState>,
    UrlPath(object_id): UrlPath<String>,
    headers: HeaderMap,
    Query(q): Q,
) -> ApiResult<Response> {
    authorize(&s.auth, presented_token(&headers, &q).as_deref(), Channel::Operator)?;
    let mode = match q.get("mode").map(String::as_str) {
        None | Some("history") => MemoryMode::History,
        Some("search") => MemoryMode::Search,
        Some(other) => return Err(ApiError::bad_request(format!("unknown mode {other:?}"))),
    };
    let limit = match q.get("limit") {
        None => DEFAULT_MEMORY_LIMIT,
        Some(l) => l
            .parse()
            .map_err(|_| ApiError::bad_request(format!("invalid limit {l:?}")))?,
    };
    let query = MemoryQuery {
        mode,
        object_id,
        limit,
        query_text: q.get("q").cloned(),
    };
    let memories: Vec<MemoryView> = s.handle.memories(query).await?.into_iter().map(Into::into).collect();
    Ok(Json(json!({ "memories": memories })).into_response())
}

async fn post_awaken(
    State(s): State<HttpState>,
    headers: HeaderMap,
    Query(q): Q,
    body: Bytes,
) -> ApiResult<Response> {
    let token = presented_token(&headers, &q);
    authorize(&s.auth, token.as_deref(), Channel::Participant)?;
    let body: AwakenBody = parse_body(&body)?;
    let image = match (body.image_ref, body.image_base64) {
        (Some(_), Some(_)) => {
            return Err(ApiError::bad_request("give image_ref or image_base64, not both"));
        }
        (Some(r), None) => {
            let root = s
                .fixtures_dir
                .as_deref()
                .ok_or_else(|| ApiError::bad_request("image_ref needs a configured fixtures_dir"))?;
            let path = resolve_fixture(root, &r)?;
            if !path.is_file() {
                return Err(ApiError::new(StatusCode::NOT_FOUND, "unknown_image", format!("no fixture {r:?}")));
            }
            Some(load_image(&path)?)
        }
        (None, Some(b64)) => {
            let bytes = B64
                .decode(b64.trim())
                .map_err(|e| ApiError::bad_request(format!("image_base64: {e}")))?;
            let mime = match body.mime {
                Some(m) => ImageMime::parse(&m)?,
                None => ImageMime::detect(&bytes, None)
                    .ok_or_else(|| ApiError::bad_request("cannot detect image type; pass mime"))?,
            };
            Some(VisionRequest::new(bytes, mime)?)
        }
        (None, None) => None,
    };
    let report = s.handle.awaken(image).await?;
    Ok(Json(report.for_channel(caller_channel(&s.auth, token.as_deref()))).into_response())
}

async fn post_utterance(
    State(s): State<HttpState>,
    headers: HeaderMap,
    Query(q): Q,
    body: Bytes,
) -> ApiResult<Response> {
    let token = presented_token(&headers, &q);
    authorize(&s.auth, token.as_deref(), Channel::Participant)?;
    let body: UtteranceBody = parse_body(&body)?;
    let text = body
        .text
        .filter(|t| !t.trim().is_empty())
        .ok_or_else(|| ApiError::bad_request("text is required"))?;
    let report = s.handle.utterance(text).await?;
    Ok(Json(report.for_channel(caller_channel(&s.auth, token.as_deref()))).into_response())
}

async fn post_goodbye(State(s): State<HttpState>, headers: HeaderMap, Query(q): Q) -> ApiResult<Response> {
    let token = presented_token(&headers, &q);
    authorize(&s.auth, token.as_deref(), Channel::Participant)?;
    let report = s.handle.goodbye().await?;
    Ok(Json(report.for_channel(caller_channel(&s.auth, token.as_deref()))).into_response())
}

fn to_sse(event: &ApiEvent) -> Event {
    let base = Event::default().id(event.seq.to_string()).event(event.kind().as_str());
    match base.clone().json_data(event) {
        Ok(e) => e,
        Err(err) => base.comment(format!("unserializable event: {err}")),
    }
}

async fn get_events(
    State(s): State<HttpState>,
    headers: HeaderMap,
    Query(q): Q,
) -> ApiResult<Sse<impl Stream<Item = Result<Event, Infallible>>>> {
    let channel = parse_channel(&q)?;
    authorize(&s.auth, presented_token(&headers, &q).as_deref(), channel)?;
    let since = match q.get("since") {
        Some(v) => Some(v.parse::<u64>().map_err(|_| ApiError::bad_request("invalid since"))?),
        None => headers
            .get("last-event-id")
            .and_then(|v| v.to_str().ok())
            .and_then(|v| v.trim().parse::<u64>().ok()),
    };
    let sub = s.handle.subscribe(channel, since);
    let resync = sub
        .truncated
        .then(|| Event::default().event("resync").data("{}"));
    let live = stream::unfold(sub.receiver, |mut rx| async move { rx.recv().await.map(|e| (e, rx)) });
    let events = stream::iter(sub.backlog).chain(live).map(|e| to_sse(&e));
    let out = stream::iter(resync).chain(events).map(Ok);
    Ok(Sse::new(out).keep_alive(KeepAlive::default()))
}

async fn not_found() -> ApiError {
    ApiError::new(StatusCode::NOT_FOUND, "not_found", "no such endpoint")
}

pub fn router(state: HttpState) -> Router {
    Router::new()
        .route("/state", get(get_state))
        .route("/objects", get(get_objects))
        .route("/objects/{id}/memories", get(get_memories))
        .route("/session/awaken", post(post_awaken))
        .route("/session/utterance", post(post_utterance))
        .route("/session/goodbye", post(post_goodbye))
        .route("/events", get(get_events))
        .fallback(not_found)
        .with_state(state)
}

/// Binds the listen address; a busy port is a startup error.
pub async fn bind(addr: &str) -> crate::Result<TcpListener> {
    let addr: SocketAddr = addr
        .parse()
        .map_err(|e| Error::Config(format!("listen {addr:?}: {e}")))?;
    TcpListener::bind(addr)
        .await
        .map_err(|e| Error::Config(format!("cannot listen on {addr}: {e}")))
}

/// Serves until `shutdown` resolves.
pub async fn serve(
    listener: TcpListener,
    state: HttpState,
    shutdown: impl std::future::Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    axum::serve(listener, router(state))
        .with_graceful_shutdown(shutdown)
        .await
}
