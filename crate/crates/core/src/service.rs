//! HTTP service: chat sessions streamed over server-sent events, plus
//! read-only graph queries. Wire formats are documented in
//! `docs/http-api.md`.
//!
//! Turns run on the blocking pool because backends are synchronous. A
//! session handles one message at a time; a second concurrent message gets
//! 409.

use std::collections::HashMap;
use std::convert::Infallible;
use std::fs::OpenOptions;
use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};

use axum::body::Bytes;
use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::sse::{Event, KeepAlive, Sse};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use futures::stream::{self, Stream, StreamExt};
use serde::Deserialize;
use serde_json::{json, Value};
use tokio::sync::mpsc;

use crate::agents::session::{append_log_turn, write_log_header};
use crate::agents::{Agent, AgentError, AgentTurn, Portfolio, Session, TurnEvent};
use crate::config::{process_env, AppConfig, AppError};
use crate::kg::{Direction, NodeId};
use crate::traversal::{extract_paths, resolve_seeds, traverse, TraversalConfig};

struct Slot {
    busy: AtomicBool,
    session: Mutex<Session>,
    /// Finished turns, readable while a turn is running.
    transcript: Mutex<Vec<AgentTurn>>,
    portfolio: Portfolio,
    log: Option<PathBuf>,
}

struct Inner {
    agent: Agent,
    sessions: Mutex<HashMap<String, Arc<Slot>>>,
    log_dir: Option<PathBuf>,
}

/// Shared service state. Cheap to clone.
#[derive(Clone)]
pub struct AppState {
    inner: Arc<Inner>,
}

impl AppState {
    pub fn new(agent: Agent, log_dir: Option<PathBuf>) -> Self {
        AppState {
            inner: Arc::new(Inner {
                agent,
                sessions: Mutex::new(HashMap::new()),
                log_dir,
            }),
        }
    }

    fn slot(&self, id: &str) -> Option<Arc<Slot>> {
        self.inner.sessions.lock().expect("sessions lock").get(id).cloned()
    }
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/health", get(health))
        .route("/sessions", post(create_session))
        .route("/sessions/{id}", get(get_session))
        .route("/sessions/{id}/messages", post(post_message))
        .route("/graph/nodes/{id}", get(get_node))
        .route("/traverse", post(post_traverse))
        .with_state(state)
}

/// Load everything from `config` and serve until the process is stopped.
pub async fn serve(config: &AppConfig) -> Result<(), AppError> {
    let stores = Arc::new(config.load_stores()?);
    let backend = config.backend(process_env)?;
    let agent = Agent::new(backend, stores, config.agent_options());
    if let Some(dir) = &config.service.session_log_dir {
        std::fs::create_dir_all(dir).map_err(|source| AppError::Io {
            path: dir.clone(),
            source,
        })?;
    }
    let app = router(AppState::new(agent, config.service.session_log_dir.clone()));
    let bind = &config.service.bind;
    let listener = tokio::net::TcpListener::bind(bind).await.map_err(|source| AppError::Io {
        path: PathBuf::from(bind),
        source,
    })?;
    tracing::info!(%bind, "listening");
    axum::serve(listener, app).await.map_err(|source| AppError::Io {
        path: PathBuf::from(bind),
        source,
    })
}

fn error(status: StatusCode, message: impl Into<String>) -> Response {
    (status, Json(json!({ "error": message.into() }))).into_response()
}

fn parse_body<T: serde::de::DeserializeOwned>(body: &Bytes) -> Result<T, Response> {
    serde_json::from_slice(body).map_err(|e| error(StatusCode::BAD_REQUEST, e.to_string()))
}

async fn health() -> Json<Value> {
    Json(json!({ "status": "ok" }))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct CreateSession {
    portfolio: Portfolio,
}

async fn create_session(State(state): State<AppState>, body: Bytes) -> Response {
    let req: CreateSession = match parse_body(&body) {
        Ok(r) => r,
        Err(resp) => return resp,
    };
    let id = uuid::Uuid::new_v4().to_string();
    let log = state.inner.log_dir.as_ref().map(|d| d.join(format!("{id}.jsonl")));
    if let Some(path) = &log {
        let written = std::fs::File::create(path)
            .map_err(|e| e.to_string())
            .and_then(|f| write_log_header(f, &id, &req.portfolio).map_err(|e| e.to_string()));
        if let Err(e) = written {
            return error(StatusCode::INTERNAL_SERVER_ERROR, format!("session log: {e}"));
        }
    }
    let slot = Slot {
        busy: AtomicBool::new(false),
        session: Mutex::new(Session::new(id.clone(), req.portfolio.clone())),
        transcript: Mutex::new(Vec::new()),
        portfolio: req.portfolio,
        log,
    };
    state.inner.sessions.lock().expect("sessions lock").insert(id.clone(), Arc::new(slot));
    Json(json!({ "session_id": id })).into_response()
}

async fn get_session(State(state): State<AppState>, Path(id): Path<String>) -> Response {
    let Some(slot) = state.slot(&id) else {
        return error(StatusCode::NOT_FOUND, format!("unknown session `{id}`"));
    };
    // Never touches the session mutex, which a running turn may hold.
    let turns = slot.transcript.lock().expect("transcript lock").clone();
    Json(json!({ "session_id": id, "portfolio": slot.portfolio, "turns": turns })).into_response()
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct PostMessage {
    text: String,
}

enum Msg {
    Event(TurnEvent),
    Failed(AgentError),
}

/// Clears the busy flag however the turn ends.
struct BusyGuard(Arc<Slot>);

impl Drop for BusyGuard {
    fn drop(&mut self) {
        self.0.busy.store(false, Ordering::Release);
    }
}

fn failure_status(e: &AgentError) -> StatusCode {
    match e {
        AgentError::Backend(_) => StatusCode::SERVICE_UNAVAILABLE,
        _ => StatusCode::BAD_GATEWAY,
    }
}

fn sse_event(msg: Msg) -> Result<Event, Infallible> {
    Ok(match msg {
        Msg::Event(e) => Event::default()
            .event(e.name())
            .data(serde_json::to_string(&e).expect("events serialize")),
        Msg::Failed(e) => Event::default()
            .event("error")
            .data(json!({ "error": e.to_string() }).to_string()),
    })
}

async fn post_message(State(state): State<AppState>, Path(id): Path<String>, body: Bytes) -> Response {
    let Some(slot) = state.slot(&id) else {
        return error(StatusCode::NOT_FOUND, format!("unknown session `{id}`"));
    };
    let req: PostMessage = match parse_body(&body) {
        Ok(r) => r,
        Err(resp) => return resp,
    };
    if req.text.trim().is_empty() {
        return error(StatusCode::BAD_REQUEST, "text must not be empty");
    }
    if slot.busy.compare_exchange(false, true, Ordering::AcqRel, Ordering::Acquire).is_err() {
        return error(StatusCode::CONFLICT, "a message for this session is already being processed");
    }
    let guard = BusyGuard(slot.clone());
    let (tx, mut rx) = mpsc::unbounded_channel::<Msg>();
    let inner = state.inner.clone();
    tokio::task::spawn_blocking(move || {
        let slot = guard.0.clone();
        let mut session = slot.session.lock().expect("session lock");
        let mut sink = |e: &TurnEvent| {
            let _ = tx.send(Msg::Event(e.clone()));
        };
        let failure = match inner.agent.run_turn(&mut session, &req.text, &mut sink) {
            Ok(turn) => {
                if let (Some(path), Some(logged)) = (&slot.log, session.logged_turns().last()) {
                    let appended = OpenOptions::new()
                        .append(true)
                        .open(path)
                        .map_err(|e| e.to_string())
                        .and_then(|f| append_log_turn(f, logged).map_err(|e| e.to_string()));
                    if let Err(e) = appended {
                        tracing::error!(session = %session.id, error = %e, "session log append failed");
                    }
                }
                slot.transcript.lock().expect("transcript lock").push(turn);
                None
            }
            Err(e) => {
                tracing::warn!(session = %session.id, error = %e, "turn failed");
                Some(e)
            }
        };
        // Free the session before the client can observe the outcome, so an
        // immediate retry is not refused as busy.
        drop(session);
        drop(guard);
        if let Some(e) = failure {
            let _ = tx.send(Msg::Failed(e));
        }
    });

    let first = match rx.recv().await {
        Some(Msg::Failed(e)) => return error(failure_status(&e), e.to_string()),
        Some(m) => m,
        None => return error(StatusCode::INTERNAL_SERVER_ERROR, "turn ended without output"),
    };
    let rest = stream::unfold(rx, |mut rx| async move { rx.recv().await.map(|m| (m, rx)) });
    let events: std::pin::Pin<Box<dyn Stream<Item = Msg> + Send>> = Box::pin(stream::once(async { first }).chain(rest));
    Sse::new(events.map(sse_event)).keep_alive(KeepAlive::default()).into_response()
}

async fn get_node(State(state): State<AppState>, Path(id): Path<String>) -> Response {
    let graph = &state.inner.agent.stores().graph;
    let node_id = NodeId::new(id.clone());
    let Some(node) = graph.node(&node_id) else {
        return error(StatusCode::NOT_FOUND, format!("unknown node `{id}`"));
    };
    let neighbors: Vec<Value> = graph
        .neighbors(&node_id, Direction::Both, None)
        .expect("node exists")
        .iter()
        .map(|n| json!({ "node": n.node, "edge": n.edge, "orientation": n.orientation }))
        .collect();
    Json(json!({ "node": node, "neighbors": neighbors })).into_response()
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct TraverseRequest {
    mentions: Vec<String>,
    #[serde(default)]
    overrides: serde_json::Map<String, Value>,
}

async fn post_traverse(State(state): State<AppState>, body: Bytes) -> Response {
    let req: TraverseRequest = match parse_body(&body) {
        Ok(r) => r,
        Err(resp) => return resp,
    };
    if req.mentions.is_empty() || req.mentions.iter().any(|m| m.trim().is_empty()) {
        return error(StatusCode::BAD_REQUEST, "mentions must be a non-empty list of non-empty strings");
    }
    let stores = state.inner.agent.stores().clone();
    let mut merged = serde_json::to_value(&stores.traversal).expect("config serializes");
    merged.as_object_mut().expect("config is an object").extend(req.overrides);
    let config: TraversalConfig = match serde_json::from_value(merged) {
        Ok(c) => c,
        Err(e) => return error(StatusCode::BAD_REQUEST, format!("overrides: {e}")),
    };
    if let Err(e) = config.validate() {
        return error(StatusCode::BAD_REQUEST, e.to_string());
    }
    let outcome = tokio::task::spawn_blocking(move || {
        let graph = &stores.graph;
        let seeds = resolve_seeds(&req.mentions, &stores.nodes, stores.embedder.as_ref(), graph, &config)
            .map_err(|e| e.to_string())?;
        let sub = traverse(graph, &seeds, graph.centrality(), &config).map_err(|e| e.to_string())?;
        let mut paths = Vec::new();
        for p in extract_paths(&sub, &config) {
            let shell = stores.phrases.verbalize_path(&p, graph).map_err(|e| e.to_string())?;
            paths.push(json!({ "path": p, "text": shell.text }));
        }
        Ok::<_, String>(json!({ "seeds": seeds, "paths": paths }))
    })
    .await;
    match outcome {
        Ok(Ok(body)) => Json(body).into_response(),
        Ok(Err(e)) => error(StatusCode::INTERNAL_SERVER_ERROR, e),
        Err(e) => error(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()),
    }
}
