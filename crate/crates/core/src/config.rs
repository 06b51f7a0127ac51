//! Application configuration: a TOML file, then environment overrides.
//!
//! Relative paths in the file are resolved against the file's directory.
//!
//! | variable               | overrides            |
//! |------------------------|----------------------|
//! | `CHAINSIGHT_GRAPH`     | `data.graph`         |
//! | `CHAINSIGHT_FACTORS`   | `data.factors`       |
//! | `CHAINSIGHT_NEWS`      | `data.news`          |
//! | `CHAINSIGHT_PORTFOLIO` | `data.portfolio`     |
//! | `CHAINSIGHT_BACKEND`   | `backend.mode`       |
//! | `CHAINSIGHT_SCENARIO`  | `backend.scenario`   |
//! | `CHAINSIGHT_MODEL`     | `backend.model`      |
//! | `CHAINSIGHT_BIND`      | `service.bind`       |
//!
//! Live mode also needs `CHAINSIGHT_LLM_URL` and `CHAINSIGHT_LLM_KEY`.

use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agents::backend::{ScenarioError, KEY_ENV, URL_ENV};
use crate::agents::{
    AgentOptions, BackendError, ChatBackend, OpenAiBackend, Portfolio, PortfolioError, RetryPolicy,
    ScenarioBackend, Stores, StoresError,
};
use crate::kg::{load_graph, GraphError, KnowledgeGraph};
use crate::traversal::TraversalConfig;
use crate::vecstore::{load_factor_table, load_news_corpus, HashingEmbedder, NewsRecord, VecstoreError, DEFAULT_DIMENSION};
use crate::verbalizer::{FactorCatalog, FactorRecord, PhraseTable, VerbalizeError};

#[derive(Debug, Error)]
pub enum AppError {
    #[error("config: {0}")]
    Config(String),
    #[error("{what} file not found: {}", path.display())]
    MissingFile { what: &'static str, path: PathBuf },
    #[error("{}: {source}", path.display())]
    Graph { path: PathBuf, source: GraphError },
    #[error("{}: {source}", path.display())]
    Vecstore { path: PathBuf, source: VecstoreError },
    #[error("{}: {source}", path.display())]
    Verbalize { path: PathBuf, source: VerbalizeError },
    #[error("{}: {source}", path.display())]
    Scenario { path: PathBuf, source: ScenarioError },
    #[error("{}: {source}", path.display())]
    Portfolio { path: PathBuf, source: PortfolioError },
    #[error(transparent)]
    Stores(#[from] StoresError),
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataPaths {
    pub graph: Option<PathBuf>,
    pub factors: Option<PathBuf>,
    /// Defaults to the built-in definitions.
    pub factor_definitions: Option<PathBuf>,
    pub news: Option<PathBuf>,
    /// Phrase overrides on top of the built-in table.
    pub phrase_table: Option<PathBuf>,
    /// Defaults to the positions of the factor table.
    pub portfolio: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EmbedderKind {
    Hashing,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmbedderConfig {
    pub kind: EmbedderKind,
    pub dimension: usize,
}

impl Default for EmbedderConfig {
    fn default() -> Self {
        EmbedderConfig {
            kind: EmbedderKind::Hashing,
            dimension: DEFAULT_DIMENSION,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendMode {
    Mock,
    Live,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BackendConfig {
    pub mode: BackendMode,
    /// Scenario file for mock mode.
    pub scenario: Option<PathBuf>,
    pub model: String,
    pub collapse_triage: bool,
    pub retry: RetryPolicy,
    pub timeout_secs: u64,
}

impl Default for BackendConfig {
    fn default() -> Self {
        BackendConfig {
            mode: BackendMode::Mock,
            scenario: None,
            model: "gpt-4o-mini".into(),
            collapse_triage: false,
            retry: RetryPolicy::default(),
            timeout_secs: 60,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServiceConfig {
    pub bind: String,
    /// When set, each session appends its log to `<dir>/<session id>.jsonl`.
    pub session_log_dir: Option<PathBuf>,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        ServiceConfig {
            bind: "127.0.0.1:8080".into(),
            session_log_dir: None,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AppConfig {
    pub data: DataPaths,
    pub embedder: EmbedderConfig,
    pub traversal: TraversalConfig,
    pub backend: BackendConfig,
    pub service: ServiceConfig,
}

fn resolve(base: &Path, p: &mut Option<PathBuf>) {
    if let Some(path) = p {
        if path.is_relative() {
            *path = base.join(&*path);
        }
    }
}

fn require(what: &'static str, path: &Path) -> Result<(), AppError> {
    if path.is_file() {
        Ok(())
    } else {
        Err(AppError::MissingFile {
            what,
            path: path.to_path_buf(),
        })
    }
}

fn open(path: &Path) -> Result<BufReader<File>, AppError> {
    File::open(path).map(BufReader::new).map_err(|source| AppError::Io {
        path: path.to_path_buf(),
        source,
    })
}

impl AppConfig {
    pub fn parse(text: &str) -> Result<Self, AppError> {
        toml::from_str(text).map_err(|e| AppError::Config(e.to_string()))
    }

    /// Read a config file, resolving relative paths against its directory.
    pub fn from_file(path: &Path) -> Result<Self, AppError> {
        let text = std::fs::read_to_string(path).map_err(|source| AppError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut config = Self::parse(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        config.resolve_paths(base);
        Ok(config)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let d = &mut self.data;
        for p in [
            &mut d.graph,
            &mut d.factors,
            &mut d.factor_definitions,
            &mut d.news,
            &mut d.phrase_table,
            &mut d.portfolio,
        ] {
            resolve(base, p);
        }
        resolve(base, &mut self.backend.scenario);
        resolve(base, &mut self.service.session_log_dir);
    }

    /// Apply `CHAINSIGHT_*` overrides from `lookup` (normally the process
    /// environment).
    pub fn apply_env(&mut self, lookup: impl Fn(&str) -> Option<String>) -> Result<(), AppError> {
        let path = |k: &str| lookup(k).map(PathBuf::from);
        if let Some(p) = path("CHAINSIGHT_GRAPH") {
            self.data.graph = Some(p);
        }
        if let Some(p) = path("CHAINSIGHT_FACTORS") {
            self.data.factors = Some(p);
        }
        if let Some(p) = path("CHAINSIGHT_NEWS") {
            self.data.news = Some(p);
        }
        if let Some(p) = path("CHAINSIGHT_PORTFOLIO") {
            self.data.portfolio = Some(p);
        }
        if let Some(p) = path("CHAINSIGHT_SCENARIO") {
            self.backend.scenario = Some(p);
        }
        if let Some(m) = lookup("CHAINSIGHT_BACKEND") {
            self.backend.mode = match m.as_str() {
                "mock" => BackendMode::Mock,
                "live" => BackendMode::Live,
                other => return Err(AppError::Config(format!("CHAINSIGHT_BACKEND must be mock or live, got `{other}`"))),
            };
        }
        if let Some(m) = lookup("CHAINSIGHT_MODEL") {
            self.backend.model = m;
        }
        if let Some(b) = lookup("CHAINSIGHT_BIND") {
            self.service.bind = b;
        }
        Ok(())
    }

    /// Check that every referenced data file exists and the traversal
    /// settings are coherent.
    pub fn validate(&self) -> Result<(), AppError> {
        let d = &self.data;
        let graph = d
            .graph
            .as_deref()
            .ok_or_else(|| AppError::Config("no graph file configured (data.graph)".into()))?;
        require("graph", graph)?;
        for (what, p) in [
            ("factor table", &d.factors),
            ("factor definitions", &d.factor_definitions),
            ("news corpus", &d.news),
            ("phrase table", &d.phrase_table),
            ("portfolio", &d.portfolio),
        ] {
            if let Some(p) = p {
                require(what, p)?;
            }
        }
        if self.embedder.dimension == 0 {
            return Err(AppError::Config("embedder.dimension must be positive".into()));
        }
        self.traversal
            .validate()
            .map_err(|e| AppError::Config(e.to_string()))?;
        Ok(())
    }

    pub fn load_graph(&self) -> Result<KnowledgeGraph, AppError> {
        let path = self
            .data
            .graph
            .as_deref()
            .ok_or_else(|| AppError::Config("no graph file configured (data.graph)".into()))?;
        require("graph", path)?;
        load_graph(open(path)?).map_err(|source| AppError::Graph {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn load_factors(&self) -> Result<Vec<FactorRecord>, AppError> {
        let Some(path) = self.data.factors.as_deref() else {
            return Ok(Vec::new());
        };
        require("factor table", path)?;
        load_factor_table(open(path)?).map_err(|source| AppError::Vecstore {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn load_catalog(&self) -> Result<FactorCatalog, AppError> {
        let Some(path) = self.data.factor_definitions.as_deref() else {
            return Ok(FactorCatalog::builtin());
        };
        require("factor definitions", path)?;
        FactorCatalog::load(open(path)?).map_err(|source| AppError::Verbalize {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn load_news(&self) -> Result<Vec<NewsRecord>, AppError> {
        let Some(path) = self.data.news.as_deref() else {
            return Ok(Vec::new());
        };
        require("news corpus", path)?;
        load_news_corpus(open(path)?).map_err(|source| AppError::Vecstore {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn load_phrases(&self) -> Result<PhraseTable, AppError> {
        let Some(path) = self.data.phrase_table.as_deref() else {
            return Ok(PhraseTable::default());
        };
        require("phrase table", path)?;
        PhraseTable::with_overrides(open(path)?).map_err(|source| AppError::Verbalize {
            path: path.to_path_buf(),
            source,
        })
    }

    /// The configured portfolio, or the positions of the factor table.
    pub fn load_portfolio(&self) -> Result<Portfolio, AppError> {
        match self.data.portfolio.as_deref() {
            Some(path) => {
                require("portfolio", path)?;
                Portfolio::from_json(open(path)?).map_err(|source| AppError::Portfolio {
                    path: path.to_path_buf(),
                    source,
                })
            }
            None => {
                let path = self.data.factors.clone().unwrap_or_default();
                Portfolio::from_factor_records(&self.load_factors()?)
                    .map_err(|source| AppError::Portfolio { path, source })
            }
        }
    }

    pub fn embedder(&self) -> HashingEmbedder {
        match self.embedder.kind {
            EmbedderKind::Hashing => HashingEmbedder::new(self.embedder.dimension),
        }
    }

    /// Load every data file and build the indices.
    pub fn load_stores(&self) -> Result<Stores, AppError> {
        self.validate()?;
        Ok(Stores::build(
            self.load_graph()?,
            &self.load_factors()?,
            &self.load_catalog()?,
            &self.load_news()?,
            Box::new(self.embedder()),
            self.load_phrases()?,
            self.traversal.clone(),
        )?)
    }

    pub fn agent_options(&self) -> AgentOptions {
        AgentOptions {
            collapse_triage: self.backend.collapse_triage,
            retry: self.backend.retry,
        }
    }

    /// Backend for the configured mode. Live mode reads the endpoint and
    /// key through `lookup`.
    pub fn backend(&self, lookup: impl Fn(&str) -> Option<String>) -> Result<Arc<dyn ChatBackend>, AppError> {
        match self.backend.mode {
            BackendMode::Mock => {
                let path = self.backend.scenario.as_deref().ok_or_else(|| {
                    AppError::Config("mock mode needs a scenario file (backend.scenario)".into())
                })?;
                require("scenario", path)?;
                let backend = ScenarioBackend::load(open(path)?).map_err(|source| AppError::Scenario {
                    path: path.to_path_buf(),
                    source,
                })?;
                Ok(Arc::new(backend))
            }
            BackendMode::Live => {
                let url = lookup(URL_ENV).ok_or_else(|| AppError::Config(format!("live mode needs {URL_ENV}")))?;
                let key = lookup(KEY_ENV).ok_or_else(|| AppError::Config(format!("live mode needs {KEY_ENV}")))?;
                Ok(Arc::new(OpenAiBackend::new(
                    &url,
                    &key,
                    &self.backend.model,
                    Duration::from_secs(self.backend.timeout_secs),
                )))
            }
        }
    }
}

/// Process environment lookup for [`AppConfig::apply_env`] and
/// [`AppConfig::backend`].
pub fn process_env(key: &str) -> Option<String> {
    std::env::var(key).ok()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashMap;

    #[test]
    fn defaults_and_parse() {
        let c = AppConfig::parse("").unwrap();
        assert_eq!(c, AppConfig::default());
        assert_eq!(c.embedder.dimension, 512);
        let c = AppConfig::parse(
            r#"
            [data]
            graph = "g.jsonl"
            [traversal]
            peripheral_hops = 3
            [backend]
            mode = "live"
            model = "m"
            "#,
        )
        .unwrap();
        assert_eq!(c.traversal.peripheral_hops, 3);
        assert_eq!(c.traversal.hub_hops, 1);
        assert_eq!(c.backend.mode, BackendMode::Live);
        assert!(AppConfig::parse("[data]\ngrpah = 'x'").is_err());
    }

    #[test]
    fn env_overrides_file() {
        let mut c = AppConfig::parse("[backend]\nmodel = 'a'").unwrap();
        let env: HashMap<&str, &str> = [("CHAINSIGHT_MODEL", "b"), ("CHAINSIGHT_BIND", "0.0.0.0:1")].into();
        c.apply_env(|k| env.get(k).map(|v| v.to_string())).unwrap();
        assert_eq!(c.backend.model, "b");
        assert_eq!(c.service.bind, "0.0.0.0:1");
        assert!(c.apply_env(|k| (k == "CHAINSIGHT_BACKEND").then(|| "remote".into())).is_err());
    }

    #[test]
    fn missing_files_are_reported() {
        let c = AppConfig::parse("[data]\ngraph = '/nonexistent/graph.jsonl'").unwrap();
        assert!(matches!(c.validate(), Err(AppError::MissingFile { what: "graph", .. })));
        assert!(matches!(AppConfig::default().validate(), Err(AppError::Config(_))));
    }

    #[test]
    fn live_mode_needs_credentials() {
        let mut c = AppConfig::default();
        c.backend.mode = BackendMode::Live;
        assert!(c.backend(|_| None).is_err());
        assert!(c.backend(|k| Some(format!("value of {k}"))).is_ok());
    }
}
