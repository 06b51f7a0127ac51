//! Retrieval tools exposed to the rerouting agent.

use std::fmt;
use std::str::FromStr;

use chrono::{DateTime, FixedOffset};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use super::backend::ToolCallStub;
use super::Stores;
use crate::numfmt::format_significant;
use crate::traversal::{extract_paths, resolve_seeds, traverse, TraversalError};
use crate::vecstore::{SearchFilter, SearchHit, VecstoreError};
use crate::verbalizer::{ContextShell, Modality, VerbalizeError};

pub const DEFAULT_K: usize = 3;
pub const MAX_K: usize = 20;
pub const MAX_PATHS: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ToolName {
    GetFactors,
    GetNews,
    GraphTraverser,
}

impl ToolName {
    pub const ALL: [ToolName; 3] = [ToolName::GetFactors, ToolName::GetNews, ToolName::GraphTraverser];

    pub fn as_str(self) -> &'static str {
        match self {
            ToolName::GetFactors => "get_factors",
            ToolName::GetNews => "get_news",
            ToolName::GraphTraverser => "graph_traverser",
        }
    }
}

impl fmt::Display for ToolName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ToolName {
    type Err = ToolCallError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ToolName::ALL
            .into_iter()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| ToolCallError::UnknownTool(s.to_string()))
    }
}

/// Function schema advertised to the backend.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolSchema {
    pub name: String,
    pub description: String,
    pub parameters: Value,
}

pub fn schema(tool: ToolName) -> ToolSchema {
    let (description, parameters) = match tool {
        ToolName::GetFactors => (
            "Retrieve factor-exposure summaries for portfolio positions.",
            json!({
                "type": "object",
                "properties": {
                    "query": {"type": "string", "description": "Security, ticker or factor to look up."},
                    "k": {"type": "integer", "minimum": 1, "maximum": MAX_K, "default": DEFAULT_K}
                },
                "required": ["query"],
                "additionalProperties": false
            }),
        ),
        ToolName::GetNews => (
            "Retrieve news passages from the macro and stock-specific streams.",
            json!({
                "type": "object",
                "properties": {
                    "query": {"type": "string"},
                    "k": {"type": "integer", "minimum": 1, "maximum": MAX_K, "default": DEFAULT_K},
                    "since": {"type": "string", "format": "date-time",
                              "description": "Only passages published at or after this RFC 3339 time."}
                },
                "required": ["query"],
                "additionalProperties": false
            }),
        ),
        ToolName::GraphTraverser => (
            "Walk the supply-chain knowledge graph from the mentioned entities and return verbalized risk paths.",
            json!({
                "type": "object",
                "properties": {
                    "mentions": {"type": "array", "items": {"type": "string"}, "minItems": 1},
                    "max_paths": {"type": "integer", "minimum": 1, "maximum": MAX_PATHS}
                },
                "required": ["mentions"],
                "additionalProperties": false
            }),
        ),
    };
    ToolSchema {
        name: tool.as_str().to_string(),
        description: description.to_string(),
        parameters,
    }
}

/// Schemas for every tool, in a fixed order.
pub fn registry() -> Vec<ToolSchema> {
    ToolName::ALL.into_iter().map(schema).collect()
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ToolCallError {
    #[error("unknown tool `{0}`")]
    UnknownTool(String),
    #[error("invalid arguments for {tool}: {message}")]
    InvalidArguments { tool: ToolName, message: String },
}

fn default_k() -> usize {
    DEFAULT_K
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FactorArgs {
    pub query: String,
    #[serde(default = "default_k")]
    pub k: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NewsArgs {
    pub query: String,
    #[serde(default = "default_k")]
    pub k: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub since: Option<DateTime<FixedOffset>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TraverserArgs {
    pub mentions: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_paths: Option<usize>,
}

/// A validated tool call.
#[derive(Debug, Clone, PartialEq)]
pub enum ToolRequest {
    GetFactors(FactorArgs),
    GetNews(NewsArgs),
    GraphTraverser(TraverserArgs),
}

impl ToolRequest {
    /// Check a backend stub against the tool's schema.
    pub fn parse(stub: &ToolCallStub) -> Result<ToolRequest, ToolCallError> {
        let tool: ToolName = stub.name.parse()?;
        let invalid = |message: String| ToolCallError::InvalidArguments { tool, message };
        // Some backends double-encode arguments as a JSON string.
        let args = match &stub.arguments {
            Value::String(s) => serde_json::from_str(s).map_err(|e| invalid(e.to_string()))?,
            other => other.clone(),
        };
        if !args.is_object() {
            return Err(invalid("arguments must be a JSON object".into()));
        }
        let check_k = |k: usize| {
            if (1..=MAX_K).contains(&k) {
                Ok(())
            } else {
                Err(invalid(format!("k must be between 1 and {MAX_K}, got {k}")))
            }
        };
        let check_query = |q: &str| {
            if q.trim().is_empty() {
                Err(invalid("query must not be empty".into()))
            } else {
                Ok(())
            }
        };
        match tool {
            ToolName::GetFactors => {
                let a: FactorArgs = serde_json::from_value(args).map_err(|e| invalid(e.to_string()))?;
                check_query(&a.query)?;
                check_k(a.k)?;
                Ok(ToolRequest::GetFactors(a))
            }
            ToolName::GetNews => {
                let a: NewsArgs = serde_json::from_value(args).map_err(|e| invalid(e.to_string()))?;
                check_query(&a.query)?;
                check_k(a.k)?;
                Ok(ToolRequest::GetNews(a))
            }
            ToolName::GraphTraverser => {
                let a: TraverserArgs =
                    serde_json::from_value(args).map_err(|e| invalid(e.to_string()))?;
                if a.mentions.is_empty() || a.mentions.iter().any(|m| m.trim().is_empty()) {
                    return Err(invalid("mentions must be a non-empty list of non-empty strings".into()));
                }
                if let Some(n) = a.max_paths {
                    if !(1..=MAX_PATHS).contains(&n) {
                        return Err(invalid(format!("max_paths must be between 1 and {MAX_PATHS}, got {n}")));
                    }
                }
                Ok(ToolRequest::GraphTraverser(a))
            }
        }
    }

    pub fn tool(&self) -> ToolName {
        match self {
            ToolRequest::GetFactors(_) => ToolName::GetFactors,
            ToolRequest::GetNews(_) => ToolName::GetNews,
            ToolRequest::GraphTraverser(_) => ToolName::GraphTraverser,
        }
    }

    /// Normalized arguments, defaults filled in.
    pub fn arguments(&self) -> Value {
        match self {
            ToolRequest::GetFactors(a) => serde_json::to_value(a),
            ToolRequest::GetNews(a) => serde_json::to_value(a),
            ToolRequest::GraphTraverser(a) => serde_json::to_value(a),
        }
        .expect("argument structs serialize")
    }
}

#[derive(Debug, Error)]
pub enum ToolError {
    #[error(transparent)]
    Vecstore(#[from] VecstoreError),
    #[error(transparent)]
    Traversal(#[from] TraversalError),
    #[error(transparent)]
    Verbalize(#[from] VerbalizeError),
}

fn scored(hits: Vec<SearchHit>) -> Vec<ContextShell> {
    hits.into_iter()
        .map(|h| h.shell.with("score", format_significant(h.score, 6)))
        .collect()
}

/// Run one validated tool call against the stores.
pub fn execute(request: &ToolRequest, stores: &Stores) -> Result<Vec<ContextShell>, ToolError> {
    let embedder = stores.embedder.as_ref();
    match request {
        ToolRequest::GetFactors(a) => Ok(scored(stores.factors.search(embedder, &a.query, a.k, None)?)),
        ToolRequest::GetNews(a) => {
            let filter = a.since.map(SearchFilter::since);
            Ok(scored(stores.news.search(embedder, &a.query, a.k, filter.as_ref())?))
        }
        ToolRequest::GraphTraverser(a) => {
            let mut config = stores.traversal.clone();
            if a.max_paths.is_some() {
                config.max_paths = a.max_paths;
            }
            let graph = &stores.graph;
            let seeds = resolve_seeds(&a.mentions, &stores.nodes, embedder, graph, &config)?;
            let subgraph = traverse(graph, &seeds, graph.centrality(), &config)?;
            let mentions = a.mentions.join(", ");
            extract_paths(&subgraph, &config)
                .iter()
                .map(|p| {
                    stores
                        .phrases
                        .verbalize_path(p, graph)
                        .map(|s| s.with("mentions", mentions.as_str()))
                        .map_err(ToolError::from)
                })
                .collect()
        }
    }
}

fn join_and(items: &[String]) -> String {
    match items {
        [] => String::new(),
        [one] => one.clone(),
        [init @ .., last] => format!("{} and {last}", init.join(", ")),
    }
}

/// Human-readable description of where a tool's results came from, e.g.
/// "News article, pages 3, 4 and 1". One entry per source document.
pub fn describe_results(tool: ToolName, arguments: &Value, results: &[ContextShell]) -> Vec<String> {
    if results.is_empty() {
        return Vec::new();
    }
    match tool {
        ToolName::GraphTraverser => {
            let mentions: Vec<String> = arguments
                .get("mentions")
                .and_then(Value::as_array)
                .map(|m| m.iter().filter_map(Value::as_str).map(str::to_string).collect())
                .unwrap_or_default();
            vec![format!("Supply-chain paths for {}", join_and(&mentions))]
        }
        ToolName::GetFactors => {
            let tickers: Vec<String> = results
                .iter()
                .filter_map(|s| s.meta("ticker"))
                .map(str::to_string)
                .collect();
            vec![format!("Factor exposures for {}", join_and(&tickers))]
        }
        ToolName::GetNews => {
            // Group pages by source document, keeping first-seen order.
            // Untitled articles are told apart by outlet and timestamp.
            let mut docs: Vec<((&str, &str, &str), Vec<String>)> = Vec::new();
            for s in results.iter().filter(|s| s.source == Modality::News) {
                let key = (
                    s.meta("title").unwrap_or("News article"),
                    s.meta("outlet").unwrap_or_default(),
                    s.meta("timestamp").unwrap_or_default(),
                );
                let page = s.meta("page").unwrap_or("?").to_string();
                match docs.iter_mut().find(|(k, _)| *k == key) {
                    Some((_, pages)) if !pages.contains(&page) => pages.push(page),
                    Some(_) => {}
                    None => docs.push((key, vec![page])),
                }
            }
            docs.into_iter()
                .map(|((title, _, _), pages)| {
                    let label = if pages.len() == 1 { "page" } else { "pages" };
                    format!("{title}, {label} {}", join_and(&pages))
                })
                .collect()
        }
    }
}
