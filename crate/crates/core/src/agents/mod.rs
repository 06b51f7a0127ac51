//! Agent loop: triage, rerouting to retrieval tools, tool execution and
//! synthesis over per-session memory.
//!
//! Every prompt starts with the portfolio digest, then the agent's role
//! instructions, then the conversation so far. Retrieved context lives only
//! for the turn that fetched it; later turns see the synthesized answers.

pub mod backend;
pub mod portfolio;
pub mod session;
pub mod tools;

use std::collections::HashMap;
use std::sync::Arc;
use std::time::Duration;

use thiserror::Error;

pub use backend::{
    BackendError, ChatBackend, ChatMessage, Completion, CompletionRequest, OpenAiBackend, Phase,
    RetryPolicy, Role, ScenarioBackend, ScenarioRecord, ToolCallStub,
};
pub use portfolio::{Portfolio, PortfolioError, Position};
pub use session::{
    AgentTurn, LoggedTurn, PromptRecord, Session, SessionLog, ToolInvocation, Triage, TurnEvent,
};
pub use tools::{ToolCallError, ToolName, ToolRequest, ToolSchema};

use crate::kg::KnowledgeGraph;
use crate::traversal::{build_node_index, TraversalConfig, TraversalError};
use crate::vecstore::{news_shells, Embedder, NewsRecord, VecstoreError, VectorIndex, PAGE_WORDS};
use crate::verbalizer::{
    render_factor_shell, ContextShell, FactorCatalog, FactorRecord, Modality, PhraseTable,
    VerbalizeError,
};

/// Everything the tools read from. Immutable and shared across sessions.
pub struct Stores {
    pub graph: KnowledgeGraph,
    pub nodes: VectorIndex,
    pub factors: VectorIndex,
    pub news: VectorIndex,
    pub embedder: Box<dyn Embedder>,
    pub phrases: PhraseTable,
    pub traversal: TraversalConfig,
}

#[derive(Debug, Error)]
pub enum StoresError {
    #[error(transparent)]
    Traversal(#[from] TraversalError),
    #[error(transparent)]
    Vecstore(#[from] VecstoreError),
    #[error(transparent)]
    Verbalize(#[from] VerbalizeError),
}

impl Stores {
    /// Render and index every modality.
    pub fn build(
        graph: KnowledgeGraph,
        factor_records: &[FactorRecord],
        catalog: &FactorCatalog,
        news: &[NewsRecord],
        embedder: Box<dyn Embedder>,
        phrases: PhraseTable,
        traversal: TraversalConfig,
    ) -> Result<Self, StoresError> {
        traversal.validate()?;
        let factor_shells = factor_records
            .iter()
            .map(|r| render_factor_shell(r, catalog))
            .collect::<Result<Vec<_>, _>>()?;
        let e = embedder.as_ref();
        let nodes = build_node_index(&graph, e)?;
        let factors = VectorIndex::build(factor_shells, e, Modality::Factor)?;
        let news = VectorIndex::build(news_shells(news, PAGE_WORDS), e, Modality::News)?;
        Ok(Stores {
            graph,
            nodes,
            factors,
            news,
            embedder,
            phrases,
            traversal,
        })
    }
}

#[derive(Debug, Error)]
pub enum AgentError {
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error("no valid tool calls after repair: {}", join_errors(.0))]
    InvalidToolCalls(Vec<ToolCallError>),
    #[error("the {0} agent answered with tool calls where text was expected")]
    UnexpectedToolCalls(Phase),
    /// Retrieval was requested but the rerouting agent named no tool.
    #[error("augmentation requested but no tool was called")]
    NoToolCalls,
}

fn join_errors(errors: &[ToolCallError]) -> String {
    errors.iter().map(ToString::to_string).collect::<Vec<_>>().join("; ")
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct AgentOptions {
    /// Let one call both triage and pick tools.
    pub collapse_triage: bool,
    pub retry: RetryPolicy,
}

pub const TRIAGE_INSTRUCTIONS: &str = "You are the triage agent of a portfolio risk assistant. \
Decide whether the user's latest message can be answered from the portfolio and the conversation so far. \
If it can, reply `FROM-MEMORY:` followed by the answer, ending with a line `Reference: <source>` naming the earlier material you relied on. \
If new information is needed, reply with the single word `AUGMENT`.";

pub const COLLAPSED_TRIAGE_INSTRUCTIONS: &str = "You are the triage agent of a portfolio risk assistant. \
If the user's latest message can be answered from the portfolio and the conversation so far, reply `FROM-MEMORY:` followed by the answer, \
ending with a line `Reference: <source>`. Otherwise call the retrieval tools needed to answer it.";

pub const REROUTE_INSTRUCTIONS: &str = "You are the rerouting agent of a portfolio risk assistant. \
Call the retrieval tools needed to answer the user's latest message: graph_traverser for supply-chain exposure, \
get_news for recent events and get_factors for factor exposures. Call several tools when the question spans them.";

pub const REPAIR_INSTRUCTIONS: &str = "Some tool calls were rejected; the errors are shown above. \
Re-issue the complete set of tool calls with corrected names and arguments.";

pub const SYNTHESIS_INSTRUCTIONS: &str = "You are the synthesis agent of a portfolio risk assistant. \
Answer the user's latest message using the portfolio, the conversation and the retrieved context. \
Refer to retrieved passages by their bracketed numbers.";

/// Parse a triage reply: `AUGMENT`, or `FROM-MEMORY: <answer>`. Replies
/// that follow neither form are taken as a direct answer.
pub fn parse_triage(reply: &str) -> (Triage, Option<String>) {
    let trimmed = reply.trim();
    let lower = trimmed.to_ascii_lowercase();
    for prefix in ["from-memory:", "from_memory:", "from memory:"] {
        if lower.starts_with(prefix) {
            return (Triage::FromMemory, Some(trimmed[prefix.len()..].trim().to_string()));
        }
    }
    let word = lower.trim_end_matches(['.', '!']);
    if word == "augment" {
        return (Triage::Augment, None);
    }
    (Triage::FromMemory, Some(trimmed.to_string()))
}

/// Sources named in `Reference:` lines of an answer, split on `;`.
pub fn footer_references(answer: &str) -> Vec<String> {
    answer
        .lines()
        .filter_map(|l| {
            let l = l.trim();
            l.strip_prefix("References:").or_else(|| l.strip_prefix("Reference:"))
        })
        .flat_map(|rest| rest.split(';'))
        .map(|r| r.trim().trim_end_matches('.').trim().to_string())
        .filter(|r| !r.is_empty())
        .collect()
}

/// Numbered block of the turn's retrieved context, shells verbatim.
pub fn context_block(shells: &[ContextShell]) -> String {
    let mut s = String::from("Retrieved context:");
    for (i, shell) in shells.iter().enumerate() {
        s.push_str(&format!("\n\n[{}] ({}) {}", i + 1, shell.source.as_str(), shell.text));
    }
    s
}

/// Per-turn bookkeeping: attempt counters and the prompts sent.
struct TurnCtx {
    index: usize,
    attempts: HashMap<Phase, usize>,
    prompts: Vec<PromptRecord>,
}

pub struct Agent {
    backend: Arc<dyn ChatBackend>,
    stores: Arc<Stores>,
    options: AgentOptions,
}

impl Agent {
    pub fn new(backend: Arc<dyn ChatBackend>, stores: Arc<Stores>, options: AgentOptions) -> Self {
        Agent {
            backend,
            stores,
            options,
        }
    }

    pub fn stores(&self) -> &Arc<Stores> {
        &self.stores
    }

    pub fn options(&self) -> AgentOptions {
        self.options
    }

    /// Prompt for `phase`: digest, instructions, history, transient
    /// context (synthesis only), then the user message.
    pub fn assemble_prompt(&self, phase: Phase, session: &Session, message: &str) -> Vec<ChatMessage> {
        let instructions = match phase {
            Phase::Triage if self.options.collapse_triage => COLLAPSED_TRIAGE_INSTRUCTIONS,
            Phase::Triage => TRIAGE_INSTRUCTIONS,
            Phase::Reroute => REROUTE_INSTRUCTIONS,
            Phase::Synthesize => SYNTHESIS_INSTRUCTIONS,
        };
        let mut messages = vec![
            ChatMessage::system(session.portfolio().digest()),
            ChatMessage::system(instructions),
        ];
        messages.extend(session.history_messages());
        if phase == Phase::Synthesize && !session.transient.is_empty() {
            messages.push(ChatMessage::system(context_block(&session.transient)));
        }
        messages.push(ChatMessage::user(message));
        messages
    }

    fn call(
        &self,
        ctx: &mut TurnCtx,
        phase: Phase,
        messages: &[ChatMessage],
        tools: &[ToolSchema],
    ) -> Result<Completion, BackendError> {
        let max = self.options.retry.max_attempts.max(1);
        let mut tries = 0;
        loop {
            let attempt = ctx.attempts.entry(phase).or_insert(0);
            let this_attempt = *attempt;
            *attempt += 1;
            ctx.prompts.push(PromptRecord {
                phase,
                attempt: this_attempt,
                messages: messages.to_vec(),
            });
            tries += 1;
            let request = CompletionRequest {
                turn: ctx.index,
                phase,
                attempt: this_attempt,
                messages,
                tools,
            };
            match self.backend.complete(&request) {
                Ok(c) => return Ok(c),
                Err(e) if e.is_retryable() && tries < max => {
                    tracing::warn!(%phase, attempt = this_attempt, error = %e, "retrying backend call");
                    if self.options.retry.backoff_ms > 0 {
                        std::thread::sleep(Duration::from_millis(
                            self.options.retry.backoff_ms << (tries - 1).min(6),
                        ));
                    }
                }
                Err(e) => return Err(e),
            }
        }
    }

    /// Validate stubs, giving the rerouting agent one chance to repair
    /// rejected calls. Returns the accepted requests with their call ids.
    fn accept_calls(
        &self,
        ctx: &mut TurnCtx,
        mut prompt: Vec<ChatMessage>,
        stubs: Vec<ToolCallStub>,
    ) -> Result<Vec<(String, ToolRequest)>, AgentError> {
        let parsed: Vec<_> = stubs.iter().map(ToolRequest::parse).collect();
        if parsed.iter().all(Result::is_ok) {
            return Ok(stubs
                .iter()
                .zip(parsed)
                .map(|(s, r)| (s.id.clone(), r.expect("checked")))
                .collect());
        }
        prompt.push(ChatMessage::assistant_calls(stubs.clone()));
        for (s, r) in stubs.iter().zip(&parsed) {
            let content = match r {
                Ok(_) => "accepted".to_string(),
                Err(e) => format!("error: {e}"),
            };
            prompt.push(ChatMessage::tool(&s.id, content));
        }
        prompt.push(ChatMessage::system(REPAIR_INSTRUCTIONS));
        let stubs = match self.call(ctx, Phase::Reroute, &prompt, &tools::registry())? {
            Completion::ToolCalls(s) => s,
            Completion::Text(_) => Vec::new(),
        };
        let mut accepted = Vec::new();
        let mut errors = Vec::new();
        for s in &stubs {
            match ToolRequest::parse(s) {
                Ok(r) => accepted.push((s.id.clone(), r)),
                Err(e) => {
                    tracing::warn!(tool = %s.name, error = %e, "dropping tool call after repair");
                    errors.push(e);
                }
            }
        }
        if accepted.is_empty() {
            if errors.is_empty() {
                errors = parsed.into_iter().filter_map(Result::err).collect();
            }
            return Err(AgentError::InvalidToolCalls(errors));
        }
        Ok(accepted)
    }

    /// Run one user turn, reporting progress to `sink` as each phase
    /// completes. On error no `Turn` event is emitted and the session keeps
    /// only the turns that finished.
    pub fn run_turn(
        &self,
        session: &mut Session,
        message: &str,
        sink: &mut dyn FnMut(&TurnEvent),
    ) -> Result<AgentTurn, AgentError> {
        session.transient.clear();
        let mut ctx = TurnCtx {
            index: session.turn_count() + 1,
            attempts: HashMap::new(),
            prompts: Vec::new(),
        };
        let registry = tools::registry();

        // Triage.
        let triage_prompt = self.assemble_prompt(Phase::Triage, session, message);
        let offered: &[ToolSchema] = if self.options.collapse_triage { &registry } else { &[] };
        let (decision, direct, early_stubs) = match self.call(&mut ctx, Phase::Triage, &triage_prompt, offered)? {
            Completion::Text(t) => {
                let (d, answer) = parse_triage(&t);
                (d, answer, None)
            }
            Completion::ToolCalls(s) if self.options.collapse_triage => (Triage::Augment, None, Some(s)),
            Completion::ToolCalls(_) => return Err(AgentError::UnexpectedToolCalls(Phase::Triage)),
        };

        sink(&TurnEvent::Triage {
            turn: ctx.index,
            user: message.to_string(),
            decision,
        });
        let mut invocations = Vec::new();
        let (response, references) = if let Some(answer) = direct {
            let refs = footer_references(&answer);
            (answer, refs)
        } else {
            // Reroute.
            let (prompt, stubs) = match early_stubs {
                Some(s) => (triage_prompt, s),
                None => {
                    let prompt = self.assemble_prompt(Phase::Reroute, session, message);
                    match self.call(&mut ctx, Phase::Reroute, &prompt, &registry)? {
                        Completion::ToolCalls(s) => (prompt, s),
                        Completion::Text(_) => (prompt, Vec::new()),
                    }
                }
            };
            if stubs.is_empty() {
                return Err(AgentError::NoToolCalls);
            }
            let accepted = self.accept_calls(&mut ctx, prompt, stubs)?;

            // Execute.
            let mut shells = Vec::new();
            for (call_id, request) in &accepted {
                let tool = request.tool();
                let arguments = request.arguments();
                sink(&TurnEvent::ToolCall {
                    call_id: call_id.clone(),
                    tool,
                    arguments: arguments.clone(),
                });
                let (results, error) = match tools::execute(request, &self.stores) {
                    Ok(r) => (r, None),
                    Err(e) => {
                        tracing::warn!(%tool, error = %e, "tool failed");
                        (Vec::new(), Some(e.to_string()))
                    }
                };
                let references = tools::describe_results(tool, &arguments, &results);
                sink(&TurnEvent::ToolResult {
                    call_id: call_id.clone(),
                    results: results.clone(),
                    references: references.clone(),
                    error: error.clone(),
                });
                shells.extend(results.iter().cloned());
                invocations.push(ToolInvocation {
                    call_id: call_id.clone(),
                    tool,
                    arguments,
                    results,
                    references,
                    error,
                });
            }
            session.transient = shells;

            // Synthesize.
            let prompt = self.assemble_prompt(Phase::Synthesize, session, message);
            let text = match self.call(&mut ctx, Phase::Synthesize, &prompt, &[])? {
                Completion::Text(t) => t,
                Completion::ToolCalls(_) => return Err(AgentError::UnexpectedToolCalls(Phase::Synthesize)),
            };
            let refs: Vec<String> = invocations.iter().flat_map(|i| i.references.iter().cloned()).collect();
            (text, refs)
        };

        let turn = AgentTurn {
            index: ctx.index,
            user: message.to_string(),
            triage: decision,
            invocations,
            response,
            references,
        };
        sink(&TurnEvent::Answer {
            text: turn.response.clone(),
        });
        sink(&TurnEvent::References {
            references: turn.references.clone(),
        });
        sink(&TurnEvent::Turn { record: turn.clone() });
        session.push(LoggedTurn {
            turn: turn.clone(),
            prompts: ctx.prompts,
        });
        Ok(turn)
    }
}

/// Outcome of re-running a logged session.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ReplayReport {
    pub turns: usize,
    pub mismatches: Vec<String>,
}

impl ReplayReport {
    pub fn is_identical(&self) -> bool {
        self.mismatches.is_empty()
    }
}

/// Re-run every user message of `log` in a fresh session and compare the
/// prompts and turn records byte for byte.
pub fn replay(log: &SessionLog, agent: &Agent) -> Result<(Session, ReplayReport), AgentError> {
    let mut session = Session::new(log.id.clone(), log.portfolio.clone());
    let mut report = ReplayReport::default();
    for logged in &log.turns {
        agent.run_turn(&mut session, &logged.turn.user, &mut |_| {})?;
        let fresh = session.logged_turns().last().expect("turn just ran");
        report.turns += 1;
        if to_json(&fresh.prompts) != to_json(&logged.prompts) {
            report.mismatches.push(format!("turn {}: prompts differ", logged.turn.index));
        }
        if to_json(&fresh.turn) != to_json(&logged.turn) {
            report.mismatches.push(format!("turn {}: record differs", logged.turn.index));
        }
    }
    Ok((session, report))
}

fn to_json<T: serde::Serialize>(value: &T) -> String {
    serde_json::to_string(value).expect("log records serialize")
}
