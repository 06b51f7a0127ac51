mod common;

use std::sync::mpsc::{channel, Receiver, Sender};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use axum::body::Body;
use axum::http::{Method, Request, StatusCode};
use axum::Router;
use chainsight::agents::{
    Agent, AgentOptions, AgentTurn, BackendError, ChatBackend, Completion, CompletionRequest, RetryPolicy,
    ScenarioBackend, Session, Stores, TurnEvent,
};
use chainsight::kg::{KnowledgeGraph, NodeId};
use chainsight::service::{router, AppState};
use common::{coltan_stores, portfolio, COLTAN_MESSAGES};
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

fn stores() -> Arc<Stores> {
    static STORES: std::sync::OnceLock<Arc<Stores>> = std::sync::OnceLock::new();
    STORES.get_or_init(|| Arc::new(coltan_stores())).clone()
}

fn scenario_app(log_dir: Option<std::path::PathBuf>) -> Router {
    let agent = common::scenario_agent("scenario_coltan.jsonl", stores(), AgentOptions::default());
    router(AppState::new(agent, log_dir))
}

async fn call(app: &Router, method: Method, uri: &str, body: Option<Value>) -> (StatusCode, String) {
    let req = Request::builder().method(method).uri(uri);
    let req = match body {
        Some(b) => req.header("content-type", "application/json").body(Body::from(b.to_string())),
        None => req.body(Body::empty()),
    }
    .unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    (status, String::from_utf8(bytes.to_vec()).unwrap())
}

async fn call_json(app: &Router, method: Method, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let (status, text) = call(app, method, uri, body).await;
    (status, serde_json::from_str(&text).unwrap_or_else(|e| panic!("{e}: {text}")))
}

fn portfolio_json() -> Value {
    serde_json::to_value(portfolio()).unwrap()
}

async fn new_session(app: &Router) -> String {
    let (status, body) = call_json(app, Method::POST, "/sessions", Some(json!({ "portfolio": portfolio_json() }))).await;
    assert_eq!(status, StatusCode::OK, "{body}");
    body["session_id"].as_str().unwrap().to_string()
}

/// Split an SSE body into (event name, data) pairs, skipping comments.
fn sse_frames(body: &str) -> Vec<(String, String)> {
    body.split("\n\n")
        .filter(|f| !f.trim().is_empty())
        .filter_map(|frame| {
            let mut name = None;
            let mut data = Vec::new();
            for line in frame.lines() {
                if let Some(v) = line.strip_prefix("event:") {
                    name = Some(v.trim_start().to_string());
                } else if let Some(v) = line.strip_prefix("data:") {
                    data.push(v.strip_prefix(' ').unwrap_or(v));
                }
            }
            name.map(|n| (n, data.join("\n")))
        })
        .collect()
}

async fn post_message(app: &Router, id: &str, text: &str) -> (StatusCode, String) {
    call(app, Method::POST, &format!("/sessions/{id}/messages"), Some(json!({ "text": text }))).await
}

#[tokio::test]
async fn health_reports_ok() {
    let (status, body) = call_json(&scenario_app(None), Method::GET, "/health", None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body, json!({ "status": "ok" }));
}

#[tokio::test]
async fn session_creation_validates_the_portfolio() {
    let app = scenario_app(None);
    let a = new_session(&app).await;
    let b = new_session(&app).await;
    assert_ne!(a, b);
    assert!(uuid::Uuid::parse_str(&a).is_ok());

    let bad = [
        json!({}),
        json!({ "portfolio": "nope" }),
        json!({ "portfolio": { "positions": [] } }),
        json!({ "portfolio": { "positions": [{ "security": "A", "ticker": "A", "weight": 60.0 }] } }),
        json!({ "portfolio": portfolio_json(), "extra": 1 }),
    ];
    for body in bad {
        let (status, err) = call_json(&app, Method::POST, "/sessions", Some(body.clone())).await;
        assert_eq!(status, StatusCode::BAD_REQUEST, "{body}");
        assert!(err["error"].is_string());
    }
    let (status, _) = call(&app, Method::POST, "/sessions", None).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn unknown_resources_are_404() {
    let app = scenario_app(None);
    for (method, uri, body) in [
        (Method::GET, "/sessions/missing", None),
        (Method::POST, "/sessions/missing/messages", Some(json!({ "text": "hi" }))),
        (Method::GET, "/graph/nodes/atlantis", None),
        (Method::GET, "/nowhere", None),
    ] {
        let (status, _) = call(&app, method, uri, body).await;
        assert_eq!(status, StatusCode::NOT_FOUND, "{uri}");
    }
}

#[tokio::test]
async fn bad_message_bodies_are_400() {
    let app = scenario_app(None);
    let id = new_session(&app).await;
    let uri = format!("/sessions/{id}/messages");
    for body in [json!({}), json!({ "text": "  " }), json!({ "text": 3 }), json!({ "text": "hi", "x": 1 })] {
        let (status, _) = call(&app, Method::POST, &uri, Some(body.clone())).await;
        assert_eq!(status, StatusCode::BAD_REQUEST, "{body}");
    }
}

#[tokio::test]
async fn coltan_dialogue_streams_the_library_turns() {
    let dir = tempfile::tempdir().unwrap();
    let app = scenario_app(Some(dir.path().to_path_buf()));
    let id = new_session(&app).await;

    // Reference run straight through the library.
    let agent = common::scenario_agent("scenario_coltan.jsonl", stores(), AgentOptions::default());
    let mut reference = Session::new(id.clone(), portfolio());

    for (i, text) in COLTAN_MESSAGES.iter().enumerate() {
        let (status, body) = post_message(&app, &id, text).await;
        assert_eq!(status, StatusCode::OK, "{body}");
        let frames = sse_frames(&body);
        let events: Vec<TurnEvent> = frames
            .iter()
            .map(|(name, data)| {
                let e: TurnEvent = serde_json::from_str(data).unwrap();
                assert_eq!(e.name(), name);
                e
            })
            .collect();

        let mut expected = Vec::new();
        agent.run_turn(&mut reference, text, &mut |e| expected.push(e.clone())).unwrap();
        assert_eq!(events, expected, "turn {}", i + 1);

        let tools: Vec<String> = frames
            .iter()
            .filter(|(n, _)| n == "tool_call")
            .map(|(_, d)| serde_json::from_str::<Value>(d).unwrap()["tool"].as_str().unwrap().to_string())
            .collect();
        assert_eq!(tools, [&["graph_traverser"][..], &["get_news"], &[]][i]);
    }

    let (status, body) = call_json(&app, Method::GET, &format!("/sessions/{id}"), None).await;
    assert_eq!(status, StatusCode::OK);
    let turns: Vec<AgentTurn> = serde_json::from_value(body["turns"].clone()).unwrap();
    assert_eq!(turns, reference.turns().cloned().collect::<Vec<_>>());
    assert_eq!(body["portfolio"], portfolio_json());

    // The on-disk log matches what the library writes for the same session.
    let mut expected_log = Vec::new();
    reference.write_log(&mut expected_log).unwrap();
    let written = std::fs::read(dir.path().join(format!("{id}.jsonl"))).unwrap();
    assert_eq!(String::from_utf8(written).unwrap(), String::from_utf8(expected_log).unwrap());
}

/// Blocks every call until released, announcing each arrival.
struct Gate {
    arrived: Mutex<Sender<()>>,
    release: Mutex<Receiver<()>>,
}

impl ChatBackend for Gate {
    fn complete(&self, _: &CompletionRequest<'_>) -> Result<Completion, BackendError> {
        self.arrived.lock().unwrap().send(()).unwrap();
        self.release.lock().unwrap().recv_timeout(Duration::from_secs(10)).unwrap();
        Ok(Completion::Text("FROM-MEMORY: done".into()))
    }
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn concurrent_message_to_a_busy_session_is_409() {
    let (arrived_tx, arrived_rx) = channel();
    let (release_tx, release_rx) = channel();
    let gate = Gate {
        arrived: Mutex::new(arrived_tx),
        release: Mutex::new(release_rx),
    };
    let app = router(AppState::new(Agent::new(Arc::new(gate), stores(), AgentOptions::default()), None));
    let id = new_session(&app).await;

    let first = {
        let (app, id) = (app.clone(), id.clone());
        tokio::spawn(async move { post_message(&app, &id, "first").await })
    };
    tokio::task::spawn_blocking(move || arrived_rx.recv_timeout(Duration::from_secs(10)).unwrap())
        .await
        .unwrap();

    let (status, body) = post_message(&app, &id, "second").await;
    assert_eq!(status, StatusCode::CONFLICT, "{body}");
    // Reading the session does not wait for the running turn.
    let (status, snapshot) = call_json(&app, Method::GET, &format!("/sessions/{id}"), None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(snapshot["turns"], json!([]));
    // Other sessions are unaffected by the busy one.
    let other = new_session(&app).await;
    assert_ne!(other, id);

    release_tx.send(()).unwrap();
    let (status, body) = first.await.unwrap();
    assert_eq!(status, StatusCode::OK);
    assert!(sse_frames(&body).iter().any(|(n, _)| n == "turn"));

    let (status, snapshot) = call_json(&app, Method::GET, &format!("/sessions/{id}"), None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(snapshot["turns"].as_array().unwrap().len(), 1);
}

struct Down;

impl ChatBackend for Down {
    fn complete(&self, _: &CompletionRequest<'_>) -> Result<Completion, BackendError> {
        Err(BackendError::Unreachable("connection refused".into()))
    }
}

#[tokio::test]
async fn unreachable_backend_is_503_and_leaves_the_session_usable() {
    let options = AgentOptions {
        retry: RetryPolicy { max_attempts: 2, backoff_ms: 0 },
        ..AgentOptions::default()
    };
    let app = router(AppState::new(Agent::new(Arc::new(Down), stores(), options), None));
    let id = new_session(&app).await;
    for _ in 0..2 {
        let (status, body) = post_message(&app, &id, "hello").await;
        assert_eq!(status, StatusCode::SERVICE_UNAVAILABLE, "{body}");
        let err: Value = serde_json::from_str(&body).unwrap();
        assert!(err["error"].as_str().unwrap().contains("unreachable"));
    }
    let (_, snapshot) = call_json(&app, Method::GET, &format!("/sessions/{id}"), None).await;
    assert_eq!(snapshot["turns"], json!([]));
}

#[tokio::test]
async fn invalid_tool_calls_are_502() {
    let records = [
        json!({"turn": 1, "phase": "triage", "action": "augment"}),
        json!({"turn": 1, "phase": "reroute", "action": "tool_calls", "payload": [{"name": "get_weather", "arguments": {}}]}),
    ];
    let backend = ScenarioBackend::from_records(records.iter().map(|r| serde_json::from_value(r.clone()).unwrap()));
    let app = router(AppState::new(Agent::new(Arc::new(backend), stores(), AgentOptions::default()), None));
    let id = new_session(&app).await;
    // Triage succeeds first, so the stream is already open.
    let (status, body) = post_message(&app, &id, "weather?").await;
    assert_eq!(status, StatusCode::OK);
    let frames = sse_frames(&body);
    assert_eq!(frames.iter().map(|(n, _)| n.as_str()).collect::<Vec<_>>(), ["triage", "error"]);
    assert!(frames[1].1.contains("get_weather"));
}

fn node_kind(graph: &KnowledgeGraph, id: &str) -> String {
    format!("{:?}", graph.node(&NodeId::new(id.to_string())).unwrap().kind)
}

#[tokio::test]
async fn node_endpoint_lists_neighbors() {
    let app = scenario_app(None);
    let (status, body) = call_json(&app, Method::GET, "/graph/nodes/apple", None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["node"]["name"], "Apple Inc.");
    let neighbors = body["neighbors"].as_array().unwrap();
    assert!(!neighbors.is_empty());
    let graph = &stores().graph;
    for n in neighbors {
        let id = n["node"]["id"].as_str().unwrap();
        let kind = node_kind(graph, id);
        assert!(kind == "Product" || kind == "InputProduct", "{id} is {kind}");
    }
    let expected = graph
        .neighbors(&NodeId::new("apple".to_string()), chainsight::kg::Direction::Both, None)
        .unwrap()
        .len();
    assert_eq!(neighbors.len(), expected);
}

#[tokio::test]
async fn traverse_endpoint_applies_overrides() {
    let app = scenario_app(None);
    let (status, base) = call_json(&app, Method::POST, "/traverse", Some(json!({ "mentions": ["coltan"] }))).await;
    assert_eq!(status, StatusCode::OK, "{base}");
    assert_eq!(base["seeds"][0]["node"], "coltan");
    let texts: Vec<&str> = base["paths"].as_array().unwrap().iter().map(|p| p["text"].as_str().unwrap()).collect();
    assert!(texts.iter().any(|t| t.contains("iPhone")));

    let (status, one) = call_json(
        &app,
        Method::POST,
        "/traverse",
        Some(json!({ "mentions": ["coltan"], "overrides": { "fixed_hops": 1, "max_paths": 3 } })),
    )
    .await;
    assert_eq!(status, StatusCode::OK, "{one}");
    let paths = one["paths"].as_array().unwrap();
    assert_eq!(paths.len(), 3);
    for p in paths {
        assert_eq!(p["path"]["edges"].as_array().unwrap().len(), 1);
    }

    for body in [
        json!({ "mentions": ["coltan"], "overrides": { "depth": 2 } }),
        json!({ "mentions": ["coltan"], "overrides": { "max_paths": 0 } }),
        json!({ "mentions": [] }),
        json!({ "mentions": [""] }),
        json!({ "seeds": ["coltan"] }),
    ] {
        let (status, _) = call(&app, Method::POST, "/traverse", Some(body.clone())).await;
        assert_eq!(status, StatusCode::BAD_REQUEST, "{body}");
    }
}
