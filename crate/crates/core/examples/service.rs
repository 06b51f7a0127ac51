//! Start the HTTP service on a free local port, hold a short conversation
//! over it and shut down.
//!
//! cargo run --example service

use std::path::Path;
use std::sync::Arc;

use chainsight::agents::Agent;
use chainsight::config::{process_env, AppConfig};
use chainsight::service::{router, AppState};
use serde_json::{json, Value};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let config = AppConfig::from_file(&Path::new(env!("CARGO_MANIFEST_DIR")).join("data/chainsight.toml"))?;
    let portfolio = config.load_portfolio()?;
    let agent = Agent::new(config.backend(process_env)?, Arc::new(config.load_stores()?), config.agent_options());

    let runtime = tokio::runtime::Runtime::new()?;
    let listener = runtime.block_on(tokio::net::TcpListener::bind("127.0.0.1:0"))?;
    let base = format!("http://{}", listener.local_addr()?);
    runtime.spawn(async move { axum::serve(listener, router(AppState::new(agent, None))).await });

    let http = ureq::agent();
    let health: Value = http.get(&format!("{base}/health")).call()?.body_mut().read_json()?;
    println!("GET /health -> {health}");

    let created: Value = http
        .post(&format!("{base}/sessions"))
        .send_json(json!({ "portfolio": portfolio }))?
        .body_mut()
        .read_json()?;
    let id = created["session_id"].as_str().ok_or("no session id")?.to_string();
    println!("POST /sessions -> {id}");

    let stream = http
        .post(&format!("{base}/sessions/{id}/messages"))
        .send_json(json!({ "text": "What is the portfolio's exposure to coltan?" }))?
        .body_mut()
        .read_to_string()?;
    for line in stream.lines().filter(|l| l.starts_with("event:")) {
        println!("  {line}");
    }

    let paths: Value = http
        .post(&format!("{base}/traverse"))
        .send_json(json!({ "mentions": ["cobalt"], "overrides": { "max_paths": 3 } }))?
        .body_mut()
        .read_json()?;
    println!("POST /traverse (cobalt, 3 paths):");
    for p in paths["paths"].as_array().into_iter().flatten() {
        println!("  {}", p["text"].as_str().unwrap_or_default());
    }
    Ok(())
}
