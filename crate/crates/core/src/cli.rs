//! Batch command line. Each subcommand loads what it needs through
//! [`AppConfig`] and calls straight into the library.
//!
//! Exit codes: 0 success, 1 runtime failure (or validation violations for
//! `ingest`), 2 usage errors.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::PathBuf;
use std::sync::Arc;

use chrono::DateTime;
use clap::{Parser, Subcommand, ValueEnum};
use serde_json::json;

use crate::agents::session::{append_log_turn, write_log_header};
use crate::agents::{replay, Agent, Session, SessionLog, TurnEvent};
use crate::config::{process_env, AppConfig, AppError, BackendMode};
use crate::kg::read_graph_unchecked;
use crate::numfmt::format_significant;
use crate::service;
use crate::traversal::{build_node_index, extract_paths, read_path_records, resolve_seeds, traverse};
use crate::vecstore::{news_shells, SearchFilter, VectorIndex, PAGE_WORDS};
use crate::verbalizer::{render_factor_shell, Modality};

#[derive(Debug, Parser)]
#[command(name = "chainsight", version, about = "Supply-chain risk retrieval and portfolio chat")]
pub struct Cli {
    /// TOML config; relative paths inside resolve against its directory.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub graph: Option<PathBuf>,
    #[arg(long, global = true)]
    pub factors: Option<PathBuf>,
    #[arg(long, global = true)]
    pub news: Option<PathBuf>,
    #[arg(long, global = true)]
    pub definitions: Option<PathBuf>,
    #[arg(long, global = true)]
    pub phrases: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Validate the configured data files and print the report.
    Ingest {
        /// Write the graph back out in canonical record order.
        #[arg(long)]
        normalized: Option<PathBuf>,
    },
    /// Export degree, closeness, betweenness and salience as TSV.
    Centrality {
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Expand from seed mentions and print the subgraph and ranked paths.
    Traverse {
        #[arg(long, required = true)]
        seed: Vec<String>,
        /// Force every seed's hop budget.
        #[arg(long)]
        hops: Option<usize>,
        #[arg(long)]
        max_paths: Option<usize>,
    },
    /// Narrate the path records in a file.
    Verbalize {
        #[arg(long)]
        path: PathBuf,
    },
    /// Exact cosine search over one modality.
    Search {
        #[arg(long, value_enum)]
        modality: SearchModality,
        #[arg(long)]
        query: String,
        #[arg(short = 'k', default_value_t = 3)]
        k: usize,
        /// RFC 3339 cutoff on the `timestamp` metadata.
        #[arg(long)]
        since: Option<String>,
    },
    /// Interactive chat over the agent loop, one message per line.
    Chat {
        /// Scenario file; implies mock mode.
        #[arg(long)]
        scenario: Option<PathBuf>,
        #[arg(long)]
        portfolio: Option<PathBuf>,
        /// Append the session log here.
        #[arg(long)]
        log: Option<PathBuf>,
        /// Re-run a logged session and compare every prompt and record.
        #[arg(long, conflicts_with = "log")]
        replay: Option<PathBuf>,
    },
    /// Start the HTTP service.
    Serve {
        #[arg(long)]
        bind: Option<String>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SearchModality {
    News,
    Factors,
    Nodes,
}

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error(transparent)]
    App(#[from] AppError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("{0}")]
    Other(String),
}

fn other(e: impl std::fmt::Display) -> CliError {
    CliError::Other(e.to_string())
}

/// Run with the given arguments (program name first) and return the exit
/// code.
pub fn run<I, T>(args: I, input: &mut dyn BufRead, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let rendered = e.render().to_string();
            let _ = if code == 0 {
                out.write_all(rendered.as_bytes())
            } else {
                err.write_all(rendered.as_bytes())
            };
            return code;
        }
    };
    match execute(cli, input, out) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            1
        }
    }
}

fn load_config(cli: &Cli) -> Result<AppConfig, AppError> {
    let mut config = match &cli.config {
        Some(path) => AppConfig::from_file(path)?,
        None => AppConfig::default(),
    };
    config.apply_env(process_env)?;
    let d = &mut config.data;
    for (flag, slot) in [
        (&cli.graph, &mut d.graph),
        (&cli.factors, &mut d.factors),
        (&cli.news, &mut d.news),
        (&cli.definitions, &mut d.factor_definitions),
        (&cli.phrases, &mut d.phrase_table),
    ] {
        if flag.is_some() {
            slot.clone_from(flag);
        }
    }
    Ok(config)
}

fn create(path: &PathBuf) -> Result<BufWriter<File>, CliError> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| other(format!("{}: {e}", path.display())))
}

fn execute(cli: Cli, input: &mut dyn BufRead, out: &mut dyn Write) -> Result<i32, CliError> {
    let mut config = load_config(&cli)?;
    match cli.command {
        Command::Ingest { normalized } => ingest(&config, normalized, out),
        Command::Centrality { out: path } => {
            let graph = config.load_graph()?;
            let table = graph.centrality();
            match path {
                Some(p) => {
                    let mut w = create(&p)?;
                    table.write_tsv(&mut w)?;
                    w.flush()?;
                }
                None => table.write_tsv(&mut *out)?,
            }
            Ok(0)
        }
        Command::Traverse { seed, hops, max_paths } => {
            if let Some(h) = hops {
                config.traversal.fixed_hops = Some(h);
                config.traversal.max_hops = config.traversal.max_hops.max(h);
                config.traversal.peripheral_hops = config.traversal.peripheral_hops.min(config.traversal.max_hops);
            }
            if max_paths.is_some() {
                config.traversal.max_paths = max_paths;
            }
            config.traversal.validate().map_err(other)?;
            traverse_cmd(&config, &seed, out)
        }
        Command::Verbalize { path } => {
            let graph = config.load_graph()?;
            let phrases = config.load_phrases()?;
            let file = File::open(&path).map_err(|e| other(format!("{}: {e}", path.display())))?;
            for p in read_path_records(BufReader::new(file)).map_err(other)? {
                let shell = phrases.verbalize_path(&p, &graph).map_err(other)?;
                writeln!(out, "{}", shell.text)?;
            }
            Ok(0)
        }
        Command::Search { modality, query, k, since } => {
            let filter = since
                .map(|s| DateTime::parse_from_rfc3339(&s).map(SearchFilter::since))
                .transpose()
                .map_err(|e| other(format!("--since: {e}")))?;
            search_cmd(&config, modality, &query, k, filter.as_ref(), out)
        }
        Command::Chat {
            scenario,
            portfolio,
            log,
            replay: replay_path,
        } => {
            if scenario.is_some() {
                config.backend.mode = BackendMode::Mock;
                config.backend.scenario = scenario;
            }
            if portfolio.is_some() {
                config.data.portfolio = portfolio;
            }
            match replay_path {
                Some(p) => replay_cmd(&config, &p, out),
                None => chat_cmd(&config, log, input, out),
            }
        }
        Command::Serve { bind } => {
            if let Some(b) = bind {
                config.service.bind = b;
            }
            let runtime = tokio::runtime::Runtime::new()?;
            runtime.block_on(service::serve(&config))?;
            Ok(0)
        }
    }
}

fn ingest(config: &AppConfig, normalized: Option<PathBuf>, out: &mut dyn Write) -> Result<i32, CliError> {
    let path = config
        .data
        .graph
        .clone()
        .ok_or_else(|| other("no graph file configured (--graph or data.graph)"))?;
    let file = File::open(&path).map_err(|e| other(format!("{}: {e}", path.display())))?;
    let graph = read_graph_unchecked(BufReader::new(file)).map_err(other)?;
    let report = graph.validate();
    writeln!(out, "graph: {} nodes, {} edges", graph.node_count(), graph.edge_count())?;
    write!(out, "{report}")?;
    let mut violations = report.len();

    let factors = config.load_factors()?;
    if config.data.factors.is_some() {
        let catalog = config.load_catalog()?;
        let mut bad = 0;
        for r in &factors {
            if let Err(e) = render_factor_shell(r, &catalog) {
                writeln!(out, "factor row `{}`: {e}", r.ticker)?;
                bad += 1;
            }
        }
        writeln!(out, "factors: {} rows", factors.len())?;
        violations += bad;
    }
    if config.data.news.is_some() {
        let news = config.load_news()?;
        writeln!(out, "news: {} articles, {} pages", news.len(), news_shells(&news, PAGE_WORDS).len())?;
    }
    if let Some(p) = normalized {
        let mut w = create(&p)?;
        graph.write_document(&mut w).map_err(other)?;
        w.flush()?;
    }
    Ok(if violations == 0 { 0 } else { 1 })
}

fn traverse_cmd(config: &AppConfig, seeds: &[String], out: &mut dyn Write) -> Result<i32, CliError> {
    let graph = config.load_graph()?;
    let phrases = config.load_phrases()?;
    let embedder = config.embedder();
    let index = build_node_index(&graph, &embedder).map_err(other)?;
    let matches = resolve_seeds(seeds, &index, &embedder, &graph, &config.traversal).map_err(other)?;
    let sub = traverse(&graph, &matches, graph.centrality(), &config.traversal).map_err(other)?;
    for (m, b) in matches.iter().zip(&sub.seeds) {
        writeln!(
            out,
            "seed\t{}\t{}\t{}\t{}\t{}",
            m.mention,
            m.node,
            format_significant(m.similarity, 4),
            format_significant(b.salience, 4),
            b.budget
        )?;
    }
    for n in &sub.nodes {
        writeln!(out, "node\t{}\t{}\t{}\t{}", n.node.id, n.node.kind, n.hops, n.node.name)?;
    }
    for (rank, p) in extract_paths(&sub, &config.traversal).iter().enumerate() {
        let shell = phrases.verbalize_path(p, &graph).map_err(other)?;
        writeln!(out, "path\t{}\t{}\t{}", rank + 1, format_significant(p.score, 6), shell.text)?;
    }
    Ok(0)
}

fn search_cmd(
    config: &AppConfig,
    modality: SearchModality,
    query: &str,
    k: usize,
    filter: Option<&SearchFilter>,
    out: &mut dyn Write,
) -> Result<i32, CliError> {
    let embedder = config.embedder();
    let index = match modality {
        SearchModality::News => {
            if config.data.news.is_none() {
                return Err(other("no news corpus configured (--news or data.news)"));
            }
            VectorIndex::build(news_shells(&config.load_news()?, PAGE_WORDS), &embedder, Modality::News)
                .map_err(other)?
        }
        SearchModality::Factors => {
            if config.data.factors.is_none() {
                return Err(other("no factor table configured (--factors or data.factors)"));
            }
            let catalog = config.load_catalog()?;
            let shells = config
                .load_factors()?
                .iter()
                .map(|r| render_factor_shell(r, &catalog))
                .collect::<Result<Vec<_>, _>>()
                .map_err(other)?;
            VectorIndex::build(shells, &embedder, Modality::Factor).map_err(other)?
        }
        SearchModality::Nodes => build_node_index(&config.load_graph()?, &embedder).map_err(other)?,
    };
    for (rank, hit) in index.search(&embedder, query, k, filter).map_err(other)?.iter().enumerate() {
        let line = json!({
            "rank": rank + 1,
            "score": hit.score,
            "metadata": hit.shell.metadata,
            "text": hit.shell.text,
        });
        writeln!(out, "{line}")?;
    }
    Ok(0)
}

fn build_agent(config: &AppConfig) -> Result<Agent, CliError> {
    let stores = Arc::new(config.load_stores()?);
    let backend = config.backend(process_env)?;
    Ok(Agent::new(backend, stores, config.agent_options()))
}

/// Console rendering of one turn event.
pub fn render_event(event: &TurnEvent) -> Option<String> {
    match event {
        TurnEvent::Triage { decision, .. } => Some(format!("[triage] {}", json!(decision).as_str().unwrap_or_default())),
        TurnEvent::ToolCall { tool, arguments, .. } => Some(format!("[tool] {tool} {arguments}")),
        TurnEvent::ToolResult { references, error, .. } => Some(match error {
            Some(e) => format!("[tool error] {e}"),
            None => format!("[retrieved] {}", references.join("; ")),
        }),
        TurnEvent::Answer { text } => Some(text.clone()),
        TurnEvent::References { references } if !references.is_empty() => {
            Some(format!("[references] {}", references.join("; ")))
        }
        _ => None,
    }
}

fn chat_cmd(
    config: &AppConfig,
    log: Option<PathBuf>,
    input: &mut dyn BufRead,
    out: &mut dyn Write,
) -> Result<i32, CliError> {
    let agent = build_agent(config)?;
    let mut session = Session::new("console", config.load_portfolio()?);
    let mut log = match log {
        Some(p) => {
            let mut w = create(&p)?;
            write_log_header(&mut w, &session.id, session.portfolio()).map_err(other)?;
            w.flush()?;
            Some(w)
        }
        None => None,
    };
    let mut line = String::new();
    loop {
        line.clear();
        if input.read_line(&mut line)? == 0 {
            break;
        }
        let text = line.trim();
        if text.is_empty() {
            continue;
        }
        if text == "/quit" {
            break;
        }
        writeln!(out, "> {text}")?;
        let mut sink = |e: &TurnEvent| {
            if let Some(s) = render_event(e) {
                let _ = writeln!(out, "{s}");
            }
        };
        agent.run_turn(&mut session, text, &mut sink).map_err(other)?;
        if let (Some(w), Some(turn)) = (log.as_mut(), session.logged_turns().last()) {
            append_log_turn(w, turn).map_err(other)?;
        }
    }
    Ok(0)
}

fn replay_cmd(config: &AppConfig, path: &PathBuf, out: &mut dyn Write) -> Result<i32, CliError> {
    let file = File::open(path).map_err(|e| other(format!("{}: {e}", path.display())))?;
    let log = SessionLog::read(BufReader::new(file)).map_err(other)?;
    let agent = build_agent(config)?;
    let (_, report) = replay(&log, &agent).map_err(other)?;
    writeln!(out, "replayed {} turns, {} mismatches", report.turns, report.mismatches.len())?;
    for m in &report.mismatches {
        writeln!(out, "mismatch: {m}")?;
    }
    Ok(if report.is_identical() { 0 } else { 1 })
}
