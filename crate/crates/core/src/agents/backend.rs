//! Chat backends: the trait the agent loop talks to, a scripted replay
//! backend for offline runs, and an OpenAI-compatible HTTP client.

use std::collections::HashMap;
use std::fmt;
use std::io::BufRead;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use super::tools::ToolSchema;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
    Tool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolCallStub {
    pub id: String,
    pub name: String,
    pub arguments: Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub content: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub tool_calls: Vec<ToolCallStub>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tool_call_id: Option<String>,
}

impl ChatMessage {
    fn plain(role: Role, content: impl Into<String>) -> Self {
        ChatMessage {
            role,
            content: content.into(),
            tool_calls: Vec::new(),
            tool_call_id: None,
        }
    }

    pub fn system(content: impl Into<String>) -> Self {
        Self::plain(Role::System, content)
    }

    pub fn user(content: impl Into<String>) -> Self {
        Self::plain(Role::User, content)
    }

    pub fn assistant(content: impl Into<String>) -> Self {
        Self::plain(Role::Assistant, content)
    }

    pub fn assistant_calls(calls: Vec<ToolCallStub>) -> Self {
        ChatMessage {
            tool_calls: calls,
            ..Self::plain(Role::Assistant, "")
        }
    }

    pub fn tool(call_id: impl Into<String>, content: impl Into<String>) -> Self {
        ChatMessage {
            tool_call_id: Some(call_id.into()),
            ..Self::plain(Role::Tool, content)
        }
    }
}

/// Which agent is consulting the backend.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Triage,
    Reroute,
    Synthesize,
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Phase::Triage => "triage",
            Phase::Reroute => "reroute",
            Phase::Synthesize => "synthesize",
        })
    }
}

#[derive(Debug, Clone, Copy)]
pub struct CompletionRequest<'a> {
    /// 1-based turn number within the session.
    pub turn: usize,
    pub phase: Phase,
    /// 0-based count of earlier calls for this turn and phase (retries and
    /// repair rounds included).
    pub attempt: usize,
    pub messages: &'a [ChatMessage],
    pub tools: &'a [ToolSchema],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "value")]
pub enum Completion {
    Text(String),
    ToolCalls(Vec<ToolCallStub>),
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum BackendError {
    /// Endpoint could not be reached at all.
    #[error("backend unreachable: {0}")]
    Unreachable(String),
    /// Transient failure worth retrying.
    #[error("backend transport failure: {0}")]
    Transport(String),
    /// The backend answered with something we cannot use.
    #[error("backend protocol error: {0}")]
    Protocol(String),
    #[error("scenario has no {phase} step for turn {turn}")]
    ScriptExhausted { turn: usize, phase: Phase },
    #[error("backend configuration: {0}")]
    Config(String),
}

impl BackendError {
    pub fn is_retryable(&self) -> bool {
        matches!(self, BackendError::Unreachable(_) | BackendError::Transport(_))
    }
}

pub trait ChatBackend: Send + Sync {
    fn complete(&self, request: &CompletionRequest<'_>) -> Result<Completion, BackendError>;
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RetryPolicy {
    pub max_attempts: usize,
    pub backoff_ms: u64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            max_attempts: 3,
            backoff_ms: 0,
        }
    }
}

// ---------------------------------------------------------------------------
// Scripted replay backend
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioAction {
    /// Triage: request retrieval.
    Augment,
    /// Triage: answer directly. Payload: answer text.
    FromMemory,
    /// Payload: `[{name, arguments}]`.
    ToolCalls,
    /// Payload: text.
    Text,
    /// Simulated transport failure. Payload: message.
    Fail,
}

/// One line of a scenario file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioRecord {
    pub turn: usize,
    pub phase: Phase,
    pub action: ScenarioAction,
    #[serde(default)]
    pub payload: Value,
}

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("scenario line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Deterministic backend replaying a scenario keyed on (turn, phase).
///
/// Records sharing a key are served in file order by `attempt`; once they
/// run out the last one repeats. The backend keeps no state, so one
/// instance can serve many sessions concurrently.
#[derive(Debug, Clone, Default)]
pub struct ScenarioBackend {
    steps: HashMap<(usize, Phase), Vec<ScenarioRecord>>,
}

impl ScenarioBackend {
    pub fn from_records(records: impl IntoIterator<Item = ScenarioRecord>) -> Self {
        let mut steps: HashMap<(usize, Phase), Vec<ScenarioRecord>> = HashMap::new();
        for r in records {
            steps.entry((r.turn, r.phase)).or_default().push(r);
        }
        ScenarioBackend { steps }
    }

    pub fn load<R: BufRead>(reader: R) -> Result<Self, ScenarioError> {
        let mut records = Vec::new();
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let rec: ScenarioRecord =
                serde_json::from_str(&line).map_err(|e| ScenarioError::Parse {
                    line: i + 1,
                    message: e.to_string(),
                })?;
            if rec.action == ScenarioAction::ToolCalls {
                stubs_from_payload(rec.turn, &rec.payload).map_err(|message| ScenarioError::Parse {
                    line: i + 1,
                    message,
                })?;
            }
            records.push(rec);
        }
        Ok(Self::from_records(records))
    }

    pub fn turns(&self) -> usize {
        self.steps.keys().map(|(t, _)| *t).max().unwrap_or(0)
    }
}

fn payload_text(payload: &Value) -> String {
    match payload {
        Value::String(s) => s.clone(),
        Value::Object(o) => o
            .get("text")
            .and_then(Value::as_str)
            .unwrap_or_default()
            .to_string(),
        Value::Null => String::new(),
        other => other.to_string(),
    }
}

fn stubs_from_payload(turn: usize, payload: &Value) -> Result<Vec<ToolCallStub>, String> {
    let calls = payload
        .as_array()
        .ok_or_else(|| "tool_calls payload must be an array".to_string())?;
    calls
        .iter()
        .enumerate()
        .map(|(i, c)| {
            let name = c
                .get("name")
                .and_then(Value::as_str)
                .ok_or_else(|| format!("tool call {i} has no name"))?;
            Ok(ToolCallStub {
                id: format!("call_{turn}_{i}"),
                name: name.to_string(),
                arguments: c.get("arguments").cloned().unwrap_or(Value::Object(Default::default())),
            })
        })
        .collect()
}

impl ChatBackend for ScenarioBackend {
    fn complete(&self, request: &CompletionRequest<'_>) -> Result<Completion, BackendError> {
        let steps = self
            .steps
            .get(&(request.turn, request.phase))
            .filter(|s| !s.is_empty())
            .ok_or(BackendError::ScriptExhausted {
                turn: request.turn,
                phase: request.phase,
            })?;
        let step = &steps[request.attempt.min(steps.len() - 1)];
        match step.action {
            ScenarioAction::Augment => Ok(Completion::Text("AUGMENT".into())),
            ScenarioAction::FromMemory => Ok(Completion::Text(format!(
                "FROM-MEMORY: {}",
                payload_text(&step.payload)
            ))),
            ScenarioAction::Text => Ok(Completion::Text(payload_text(&step.payload))),
            ScenarioAction::ToolCalls => stubs_from_payload(request.turn, &step.payload)
                .map(Completion::ToolCalls)
                .map_err(BackendError::Protocol),
            ScenarioAction::Fail => Err(BackendError::Transport(payload_text(&step.payload))),
        }
    }
}

// ---------------------------------------------------------------------------
// OpenAI-compatible chat completions
// ---------------------------------------------------------------------------

pub const URL_ENV: &str = "CHAINSIGHT_LLM_URL";
pub const KEY_ENV: &str = "CHAINSIGHT_LLM_KEY";

/// Client for any endpoint speaking the chat-completions protocol with
/// function calling.
pub struct OpenAiBackend {
    endpoint: String,
    api_key: String,
    model: String,
    agent: ureq::Agent,
}

impl fmt::Debug for OpenAiBackend {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("OpenAiBackend")
            .field("endpoint", &self.endpoint)
            .field("model", &self.model)
            .finish_non_exhaustive()
    }
}

impl OpenAiBackend {
    /// `base_url` may be the API root (`…/v1`) or the full
    /// `…/chat/completions` URL.
    pub fn new(base_url: &str, api_key: &str, model: &str, timeout: Duration) -> Self {
        let base = base_url.trim_end_matches('/');
        let endpoint = if base.ends_with("/chat/completions") {
            base.to_string()
        } else {
            format!("{base}/chat/completions")
        };
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .build()
            .into();
        OpenAiBackend {
            endpoint,
            api_key: api_key.to_string(),
            model: model.to_string(),
            agent,
        }
    }

    pub fn from_env(model: &str) -> Result<Self, BackendError> {
        let url = std::env::var(URL_ENV)
            .map_err(|_| BackendError::Config(format!("{URL_ENV} is not set")))?;
        let key = std::env::var(KEY_ENV)
            .map_err(|_| BackendError::Config(format!("{KEY_ENV} is not set")))?;
        Ok(Self::new(&url, &key, model, Duration::from_secs(60)))
    }

    pub fn request_body(&self, request: &CompletionRequest<'_>) -> Value {
        let messages: Vec<Value> = request.messages.iter().map(wire_message).collect();
        let mut body = json!({ "model": self.model, "messages": messages });
        if !request.tools.is_empty() {
            body["tools"] = request
                .tools
                .iter()
                .map(|t| {
                    json!({
                        "type": "function",
                        "function": {
                            "name": t.name,
                            "description": t.description,
                            "parameters": t.parameters,
                        }
                    })
                })
                .collect();
        }
        body
    }
}

fn wire_message(m: &ChatMessage) -> Value {
    let role = match m.role {
        Role::System => "system",
        Role::User => "user",
        Role::Assistant => "assistant",
        Role::Tool => "tool",
    };
    let mut v = json!({ "role": role, "content": m.content });
    if !m.tool_calls.is_empty() {
        v["tool_calls"] = m
            .tool_calls
            .iter()
            .map(|c| {
                json!({
                    "id": c.id,
                    "type": "function",
                    "function": { "name": c.name, "arguments": c.arguments.to_string() },
                })
            })
            .collect();
    }
    if let Some(id) = &m.tool_call_id {
        v["tool_call_id"] = json!(id);
    }
    v
}

/// Interpret a chat-completions response body.
pub fn parse_completion(body: &Value) -> Result<Completion, BackendError> {
    let message = body
        .pointer("/choices/0/message")
        .ok_or_else(|| BackendError::Protocol("response has no choices[0].message".into()))?;
    if let Some(calls) = message.get("tool_calls").and_then(Value::as_array) {
        if !calls.is_empty() {
            let stubs = calls
                .iter()
                .enumerate()
                .map(|(i, c)| {
                    let name = c
                        .pointer("/function/name")
                        .and_then(Value::as_str)
                        .ok_or_else(|| BackendError::Protocol(format!("tool call {i} has no name")))?;
                    let raw = c.pointer("/function/arguments").cloned().unwrap_or(Value::Null);
                    // Arguments arrive as a JSON-encoded string; keep the raw
                    // string when it does not parse so validation can reject it.
                    let arguments = match raw {
                        Value::String(s) => serde_json::from_str(&s).unwrap_or(Value::String(s)),
                        other => other,
                    };
                    Ok(ToolCallStub {
                        id: c
                            .get("id")
                            .and_then(Value::as_str)
                            .map_or_else(|| format!("call_{i}"), str::to_string),
                        name: name.to_string(),
                        arguments,
                    })
                })
                .collect::<Result<Vec<_>, _>>()?;
            return Ok(Completion::ToolCalls(stubs));
        }
    }
    message
        .get("content")
        .and_then(Value::as_str)
        .map(|s| Completion::Text(s.to_string()))
        .ok_or_else(|| BackendError::Protocol("message has neither content nor tool calls".into()))
}

impl ChatBackend for OpenAiBackend {
    fn complete(&self, request: &CompletionRequest<'_>) -> Result<Completion, BackendError> {
        let body = self.request_body(request);
        let mut response = self
            .agent
            .post(&self.endpoint)
            .header("Authorization", &format!("Bearer {}", self.api_key))
            .send_json(&body)
            .map_err(|e| match e {
                ureq::Error::StatusCode(code) if code >= 500 || code == 429 => {
                    BackendError::Transport(format!("HTTP {code}"))
                }
                ureq::Error::StatusCode(code) => BackendError::Protocol(format!("HTTP {code}")),
                ureq::Error::Timeout(_) => BackendError::Transport(e.to_string()),
                other => BackendError::Unreachable(other.to_string()),
            })?;
        let value: Value = response
            .body_mut()
            .read_json()
            .map_err(|e| BackendError::Protocol(e.to_string()))?;
        parse_completion(&value)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SCRIPT: &str = r#"{"turn":1,"phase":"triage","action":"fail","payload":"flaky"}
{"turn":1,"phase":"triage","action":"augment"}
{"turn":1,"phase":"reroute","action":"tool_calls","payload":[{"name":"get_news","arguments":{"query":"cobalt"}}]}
{"turn":1,"phase":"synthesize","action":"text","payload":{"text":"done"}}
{"turn":2,"phase":"triage","action":"from_memory","payload":"already covered"}"#;

    fn call(b: &ScenarioBackend, turn: usize, phase: Phase, attempt: usize) -> Result<Completion, BackendError> {
        b.complete(&CompletionRequest {
            turn,
            phase,
            attempt,
            messages: &[],
            tools: &[],
        })
    }

    #[test]
    fn scenario_lookup() {
        let b = ScenarioBackend::load(SCRIPT.as_bytes()).unwrap();
        assert_eq!(b.turns(), 2);
        assert!(matches!(call(&b, 1, Phase::Triage, 0), Err(BackendError::Transport(m)) if m == "flaky"));
        assert_eq!(call(&b, 1, Phase::Triage, 1).unwrap(), Completion::Text("AUGMENT".into()));
        // past the end the last step repeats
        assert_eq!(call(&b, 1, Phase::Triage, 5).unwrap(), Completion::Text("AUGMENT".into()));
        match call(&b, 1, Phase::Reroute, 0).unwrap() {
            Completion::ToolCalls(c) => {
                assert_eq!(c[0].name, "get_news");
                assert_eq!(c[0].id, "call_1_0");
            }
            other => panic!("{other:?}"),
        }
        assert_eq!(call(&b, 1, Phase::Synthesize, 0).unwrap(), Completion::Text("done".into()));
        assert_eq!(
            call(&b, 2, Phase::Triage, 0).unwrap(),
            Completion::Text("FROM-MEMORY: already covered".into())
        );
        assert!(matches!(
            call(&b, 3, Phase::Triage, 0),
            Err(BackendError::ScriptExhausted { turn: 3, .. })
        ));
    }

    #[test]
    fn scenario_parse_errors() {
        assert!(ScenarioBackend::load(r#"{"turn":1,"phase":"nap","action":"text"}"#.as_bytes()).is_err());
        let bad_calls = r#"{"turn":1,"phase":"reroute","action":"tool_calls","payload":{"name":"x"}}"#;
        assert!(ScenarioBackend::load(bad_calls.as_bytes()).is_err());
    }

    #[test]
    fn wire_format() {
        let b = OpenAiBackend::new("http://localhost:9/v1/", "k", "gpt-test", Duration::from_secs(1));
        assert_eq!(b.endpoint, "http://localhost:9/v1/chat/completions");
        let msgs = vec![
            ChatMessage::system("sys"),
            ChatMessage::assistant_calls(vec![ToolCallStub {
                id: "c1".into(),
                name: "get_news".into(),
                arguments: json!({"query": "q"}),
            }]),
            ChatMessage::tool("c1", "error: bad"),
        ];
        let tools = super::super::tools::registry();
        let body = b.request_body(&CompletionRequest {
            turn: 1,
            phase: Phase::Reroute,
            attempt: 0,
            messages: &msgs,
            tools: &tools,
        });
        assert_eq!(body["model"], "gpt-test");
        assert_eq!(body["messages"][1]["tool_calls"][0]["function"]["arguments"], r#"{"query":"q"}"#);
        assert_eq!(body["messages"][2]["tool_call_id"], "c1");
        assert_eq!(body["tools"].as_array().unwrap().len(), 3);
        assert_eq!(body["tools"][0]["type"], "function");
    }

    #[test]
    fn completion_parsing() {
        let text = json!({"choices":[{"message":{"role":"assistant","content":"hello"}}]});
        assert_eq!(parse_completion(&text).unwrap(), Completion::Text("hello".into()));
        let calls = json!({"choices":[{"message":{"role":"assistant","content":null,"tool_calls":[
            {"id":"x","type":"function","function":{"name":"get_news","arguments":"{\"query\":\"cobalt\",\"k\":3}"}},
            {"id":"y","type":"function","function":{"name":"get_news","arguments":"{not json"}}
        ]}}]});
        match parse_completion(&calls).unwrap() {
            Completion::ToolCalls(c) => {
                assert_eq!(c[0].arguments, json!({"query": "cobalt", "k": 3}));
                assert_eq!(c[1].arguments, Value::String("{not json".into()));
            }
            other => panic!("{other:?}"),
        }
        assert!(parse_completion(&json!({"choices": []})).is_err());
    }
}
