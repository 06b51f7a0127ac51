//! Per-session state, the turn record, streamed turn events and the
//! append-only session log.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use super::backend::{ChatMessage, Phase};
use super::portfolio::Portfolio;
use super::tools::ToolName;
use crate::verbalizer::ContextShell;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Triage {
    FromMemory,
    Augment,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolInvocation {
    pub call_id: String,
    pub tool: ToolName,
    /// Normalized arguments (defaults filled in).
    pub arguments: Value,
    pub results: Vec<ContextShell>,
    pub references: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// Everything a finished turn contributed to the conversation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentTurn {
    /// 1-based.
    pub index: usize,
    pub user: String,
    pub triage: Triage,
    pub invocations: Vec<ToolInvocation>,
    pub response: String,
    pub references: Vec<String>,
}

/// Incremental view of a turn, in emission order. The final `Turn` event
/// carries the full record, which the preceding events reconstruct exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum TurnEvent {
    Triage {
        turn: usize,
        user: String,
        decision: Triage,
    },
    ToolCall {
        call_id: String,
        tool: ToolName,
        arguments: Value,
    },
    ToolResult {
        call_id: String,
        results: Vec<ContextShell>,
        references: Vec<String>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        error: Option<String>,
    },
    Answer {
        text: String,
    },
    References {
        references: Vec<String>,
    },
    Turn {
        record: AgentTurn,
    },
}

impl TurnEvent {
    /// Event name used on the wire.
    pub fn name(&self) -> &'static str {
        match self {
            TurnEvent::Triage { .. } => "triage",
            TurnEvent::ToolCall { .. } => "tool_call",
            TurnEvent::ToolResult { .. } => "tool_result",
            TurnEvent::Answer { .. } => "answer",
            TurnEvent::References { .. } => "references",
            TurnEvent::Turn { .. } => "turn",
        }
    }
}

impl AgentTurn {
    /// Rebuild a turn from its incremental events (a trailing `Turn`
    /// event is ignored). `None` when the stream is incomplete or out of
    /// order.
    pub fn from_events(events: &[TurnEvent]) -> Option<AgentTurn> {
        let mut iter = events.iter();
        let (index, user, triage) = match iter.next()? {
            TurnEvent::Triage { turn, user, decision } => (*turn, user.clone(), *decision),
            _ => return None,
        };
        let mut turn = AgentTurn {
            index,
            user,
            triage,
            invocations: Vec::new(),
            response: String::new(),
            references: Vec::new(),
        };
        let (mut answered, mut referenced) = (false, false);
        for e in iter {
            match e {
                TurnEvent::ToolCall { call_id, tool, arguments } if !answered => {
                    turn.invocations.push(ToolInvocation {
                        call_id: call_id.clone(),
                        tool: *tool,
                        arguments: arguments.clone(),
                        results: Vec::new(),
                        references: Vec::new(),
                        error: None,
                    });
                }
                TurnEvent::ToolResult { call_id, results, references, error } if !answered => {
                    let inv = turn.invocations.iter_mut().find(|i| &i.call_id == call_id)?;
                    inv.results = results.clone();
                    inv.references = references.clone();
                    inv.error = error.clone();
                }
                TurnEvent::Answer { text } if !answered => {
                    turn.response = text.clone();
                    answered = true;
                }
                TurnEvent::References { references } if answered && !referenced => {
                    turn.references = references.clone();
                    referenced = true;
                }
                TurnEvent::Turn { .. } => break,
                _ => return None,
            }
        }
        (answered && referenced).then_some(turn)
    }
}

/// Exact messages sent to the backend for one call.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptRecord {
    pub phase: Phase,
    pub attempt: usize,
    pub messages: Vec<ChatMessage>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoggedTurn {
    pub turn: AgentTurn,
    pub prompts: Vec<PromptRecord>,
}

/// One user's conversation. The portfolio is fixed at creation.
#[derive(Debug, Clone)]
pub struct Session {
    pub id: String,
    portfolio: Portfolio,
    turns: Vec<LoggedTurn>,
    /// Context shells of the turn in progress; cleared when a turn starts.
    pub(crate) transient: Vec<ContextShell>,
}

impl Session {
    pub fn new(id: impl Into<String>, portfolio: Portfolio) -> Self {
        Session {
            id: id.into(),
            portfolio,
            turns: Vec::new(),
            transient: Vec::new(),
        }
    }

    pub fn portfolio(&self) -> &Portfolio {
        &self.portfolio
    }

    pub fn turns(&self) -> impl Iterator<Item = &AgentTurn> {
        self.turns.iter().map(|t| &t.turn)
    }

    pub fn logged_turns(&self) -> &[LoggedTurn] {
        &self.turns
    }

    pub fn turn_count(&self) -> usize {
        self.turns.len()
    }

    /// Shells retrieved by the current (or most recent) turn.
    pub fn transient(&self) -> &[ContextShell] {
        &self.transient
    }

    pub(crate) fn push(&mut self, turn: LoggedTurn) {
        self.turns.push(turn);
    }

    /// Earlier turns as alternating user and assistant messages.
    pub fn history_messages(&self) -> Vec<ChatMessage> {
        self.turns()
            .flat_map(|t| [ChatMessage::user(&t.user), ChatMessage::assistant(&t.response)])
            .collect()
    }

    pub fn write_log<W: Write>(&self, mut out: W) -> Result<(), LogError> {
        write_log_header(&mut out, &self.id, &self.portfolio)?;
        for t in &self.turns {
            append_log_turn(&mut out, t)?;
        }
        Ok(())
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "rec", rename_all = "snake_case")]
enum LogRecord {
    Session { id: String, portfolio: Portfolio },
    Turn(LoggedTurn),
}

#[derive(Debug, Error)]
pub enum LogError {
    #[error("session log line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("session log has no session header")]
    MissingHeader,
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub fn write_log_header<W: Write>(mut out: W, id: &str, portfolio: &Portfolio) -> Result<(), LogError> {
    let rec = LogRecord::Session {
        id: id.to_string(),
        portfolio: portfolio.clone(),
    };
    serde_json::to_writer(&mut out, &rec)?;
    out.write_all(b"\n")?;
    Ok(())
}

pub fn append_log_turn<W: Write>(mut out: W, turn: &LoggedTurn) -> Result<(), LogError> {
    // Serialize a borrowed copy through the tagged enum.
    let rec = LogRecord::Turn(turn.clone());
    serde_json::to_writer(&mut out, &rec)?;
    out.write_all(b"\n")?;
    out.flush()?;
    Ok(())
}

/// A session log read back from disk.
#[derive(Debug, Clone, PartialEq)]
pub struct SessionLog {
    pub id: String,
    pub portfolio: Portfolio,
    pub turns: Vec<LoggedTurn>,
}

impl SessionLog {
    pub fn read<R: BufRead>(reader: R) -> Result<Self, LogError> {
        let mut header: Option<(String, Portfolio)> = None;
        let mut turns = Vec::new();
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let rec: LogRecord = serde_json::from_str(&line).map_err(|e| LogError::Parse {
                line: i + 1,
                message: e.to_string(),
            })?;
            match rec {
                LogRecord::Session { id, portfolio } if header.is_none() => header = Some((id, portfolio)),
                LogRecord::Session { .. } => {
                    return Err(LogError::Parse {
                        line: i + 1,
                        message: "second session header".into(),
                    })
                }
                LogRecord::Turn(_) if header.is_none() => return Err(LogError::MissingHeader),
                LogRecord::Turn(t) => turns.push(t),
            }
        }
        let (id, portfolio) = header.ok_or(LogError::MissingHeader)?;
        Ok(SessionLog { id, portfolio, turns })
    }

    pub fn user_messages(&self) -> impl Iterator<Item = &str> {
        self.turns.iter().map(|t| t.turn.user.as_str())
    }
}
