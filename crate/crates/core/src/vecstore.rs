//! Per-modality embedding indices with exact cosine search.
//!
//! Each modality (factor shells, news chunks, graph-node shells) lives in
//! its own [`VectorIndex`], so a compound question can be answered by
//! searching each store separately instead of hoping one merged top-k
//! happens to cover every topic.

use std::collections::BTreeMap;
use std::hash::Hasher;
use std::io::{BufRead, Read, Write};

use chrono::{DateTime, FixedOffset};
use fnv::FnvHasher;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::verbalizer::{ContextShell, FactorExposure, FactorRecord, Modality};

#[derive(Debug, Error)]
pub enum VecstoreError {
    #[error("embedding dimension {got} does not match index dimension {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("shell of modality {got} cannot go into a {expected} index")]
    ModalityMismatch { expected: Modality, got: Modality },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("index file: {0}")]
    Format(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Maps text to a fixed-dimension vector.
pub trait Embedder: Send + Sync {
    fn dimension(&self) -> usize;
    fn embed(&self, text: &str) -> Vec<f64>;
}

pub const DEFAULT_DIMENSION: usize = 512;

/// Feature-hashed token-frequency embedder: case-folded alphanumeric word
/// tokens are hashed (FNV-1a) into `dimension` buckets, then the count
/// vector is L2-normalized. Empty text maps to the zero vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HashingEmbedder {
    dimension: usize,
}

impl HashingEmbedder {
    pub fn new(dimension: usize) -> Self {
        assert!(dimension > 0, "embedding dimension must be positive");
        HashingEmbedder { dimension }
    }
}

impl Default for HashingEmbedder {
    fn default() -> Self {
        HashingEmbedder::new(DEFAULT_DIMENSION)
    }
}

pub fn tokenize(text: &str) -> impl Iterator<Item = String> + '_ {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
}

impl Embedder for HashingEmbedder {
    fn dimension(&self) -> usize {
        self.dimension
    }

    fn embed(&self, text: &str) -> Vec<f64> {
        let mut v = vec![0.0; self.dimension];
        for token in tokenize(text) {
            let mut h = FnvHasher::default();
            h.write(token.as_bytes());
            v[(h.finish() % self.dimension as u64) as usize] += 1.0;
        }
        normalize(&mut v);
        v
    }
}

/// Embed with the default 512-dimensional hashing embedder.
pub fn default_embed(text: &str) -> Vec<f64> {
    HashingEmbedder::default().embed(text)
}

/// Scale to unit length. Returns `false` (and leaves `v` untouched) for the
/// zero vector.
pub fn normalize(v: &mut [f64]) -> bool {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm == 0.0 {
        return false;
    }
    v.iter_mut().for_each(|x| *x /= norm);
    true
}

/// Cosine similarity; 0 when either side is the zero vector.
pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let (mut dot, mut na, mut nb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    (dot / (na.sqrt() * nb.sqrt())).clamp(-1.0, 1.0)
}

/// Metadata predicate applied before ranking.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SearchFilter {
    /// Keep entries whose `timestamp` metadata is at or after this instant.
    /// Entries without a parseable timestamp are dropped.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub since: Option<DateTime<FixedOffset>>,
    /// Exact-match metadata constraints.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub equals: BTreeMap<String, String>,
}

impl SearchFilter {
    pub fn since(cutoff: DateTime<FixedOffset>) -> Self {
        SearchFilter {
            since: Some(cutoff),
            ..Default::default()
        }
    }

    pub fn matches(&self, shell: &ContextShell) -> bool {
        if let Some(cutoff) = self.since {
            let ok = shell
                .meta("timestamp")
                .and_then(|t| DateTime::parse_from_rfc3339(t).ok())
                .is_some_and(|t| t >= cutoff);
            if !ok {
                return false;
            }
        }
        self.equals
            .iter()
            .all(|(k, v)| shell.meta(k) == Some(v.as_str()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexEntry {
    pub vector: Vec<f64>,
    pub shell: ContextShell,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SearchHit {
    pub shell: ContextShell,
    pub score: f64,
    /// Position of the entry in the index.
    pub entry: usize,
}

/// Exact cosine index for a single modality. Immutable after build.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorIndex {
    modality: Modality,
    dimension: usize,
    entries: Vec<IndexEntry>,
}

impl VectorIndex {
    pub fn build(
        shells: Vec<ContextShell>,
        embedder: &dyn Embedder,
        modality: Modality,
    ) -> Result<Self, VecstoreError> {
        let dimension = embedder.dimension();
        let mut entries = Vec::with_capacity(shells.len());
        for shell in shells {
            if shell.source != modality {
                return Err(VecstoreError::ModalityMismatch {
                    expected: modality,
                    got: shell.source,
                });
            }
            let vector = embedder.embed(&shell.text);
            if vector.len() != dimension {
                return Err(VecstoreError::DimensionMismatch {
                    expected: dimension,
                    got: vector.len(),
                });
            }
            entries.push(IndexEntry { vector, shell });
        }
        Ok(VectorIndex {
            modality,
            dimension,
            entries,
        })
    }

    pub fn modality(&self) -> Modality {
        self.modality
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[IndexEntry] {
        &self.entries
    }

    /// First entry whose metadata `key` equals `value`.
    pub fn find_by_meta(&self, key: &str, value: &str) -> Option<&IndexEntry> {
        self.entries.iter().find(|e| e.shell.meta(key) == Some(value))
    }

    pub fn search(
        &self,
        embedder: &dyn Embedder,
        query: &str,
        k: usize,
        filter: Option<&SearchFilter>,
    ) -> Result<Vec<SearchHit>, VecstoreError> {
        if embedder.dimension() != self.dimension {
            return Err(VecstoreError::DimensionMismatch {
                expected: self.dimension,
                got: embedder.dimension(),
            });
        }
        self.search_vector(&embedder.embed(query), k, filter)
    }

    /// Exact top-`k` by cosine among entries passing `filter`; ties keep
    /// insertion order.
    pub fn search_vector(
        &self,
        query: &[f64],
        k: usize,
        filter: Option<&SearchFilter>,
    ) -> Result<Vec<SearchHit>, VecstoreError> {
        if query.len() != self.dimension {
            return Err(VecstoreError::DimensionMismatch {
                expected: self.dimension,
                got: query.len(),
            });
        }
        let mut scored: Vec<(usize, f64)> = self
            .entries
            .iter()
            .enumerate()
            .filter(|(_, e)| filter.is_none_or(|f| f.matches(&e.shell)))
            .map(|(i, e)| (i, cosine(query, &e.vector)))
            .collect();
        // stable: equal scores stay in insertion order
        scored.sort_by(|a, b| b.1.total_cmp(&a.1));
        scored.truncate(k);
        Ok(scored
            .into_iter()
            .map(|(i, score)| SearchHit {
                shell: self.entries[i].shell.clone(),
                score,
                entry: i,
            })
            .collect())
    }

    /// Persist in the versioned text format (see `docs/index-format.md`).
    pub fn save<W: Write>(&self, mut out: W) -> Result<(), VecstoreError> {
        writeln!(out, "{INDEX_MAGIC}")?;
        let header = IndexHeader {
            modality: self.modality,
            dimension: self.dimension,
            count: self.entries.len(),
        };
        writeln!(out, "{}", serde_json::to_string(&header).map_err(fmt_err)?)?;
        for e in &self.entries {
            writeln!(out, "{}", serde_json::to_string(e).map_err(fmt_err)?)?;
        }
        Ok(())
    }

    pub fn load<R: BufRead>(reader: R) -> Result<Self, VecstoreError> {
        let mut lines = reader.lines();
        let magic = lines.next().transpose()?.unwrap_or_default();
        if magic.trim() != INDEX_MAGIC {
            return Err(VecstoreError::Format(format!("unsupported header `{magic}`")));
        }
        let header: IndexHeader = serde_json::from_str(
            &lines.next().transpose()?.ok_or_else(|| VecstoreError::Format("missing header".into()))?,
        )
        .map_err(fmt_err)?;
        let mut entries = Vec::with_capacity(header.count);
        for line in lines {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let e: IndexEntry = serde_json::from_str(&line).map_err(fmt_err)?;
            if e.vector.len() != header.dimension {
                return Err(VecstoreError::DimensionMismatch {
                    expected: header.dimension,
                    got: e.vector.len(),
                });
            }
            entries.push(e);
        }
        if entries.len() != header.count {
            return Err(VecstoreError::Format(format!(
                "header declares {} entries, found {}",
                header.count,
                entries.len()
            )));
        }
        Ok(VectorIndex {
            modality: header.modality,
            dimension: header.dimension,
            entries,
        })
    }
}

const INDEX_MAGIC: &str = "chainsight-index v1";

#[derive(Serialize, Deserialize)]
struct IndexHeader {
    modality: Modality,
    dimension: usize,
    count: usize,
}

fn fmt_err(e: serde_json::Error) -> VecstoreError {
    VecstoreError::Format(e.to_string())
}

pub fn build_index(
    shells: Vec<ContextShell>,
    embedder: &dyn Embedder,
    modality: Modality,
) -> Result<VectorIndex, VecstoreError> {
    VectorIndex::build(shells, embedder, modality)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NewsStream {
    Macro,
    StockSpecific,
}

impl NewsStream {
    pub fn as_str(self) -> &'static str {
        match self {
            NewsStream::Macro => "macro",
            NewsStream::StockSpecific => "stock-specific",
        }
    }
}

/// One line of a news corpus file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NewsRecord {
    pub outlet: String,
    pub timestamp: DateTime<FixedOffset>,
    pub stream: NewsStream,
    pub page: u32,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub title: Option<String>,
}

pub fn load_news_corpus<R: BufRead>(reader: R) -> Result<Vec<NewsRecord>, VecstoreError> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| VecstoreError::Parse {
            line: i + 1,
            message: e.to_string(),
        })?);
    }
    Ok(out)
}

/// Default chunk budget in words, roughly one printed page.
pub const PAGE_WORDS: usize = 400;

/// Page-marker line: form feed, or a line of the form `[page N]`.
fn page_marker(line: &str) -> Option<Option<u32>> {
    let t = line.trim();
    if t.is_empty() && line.contains('\u{c}') {
        return Some(None);
    }
    let inner = t.strip_prefix("[page ")?.strip_suffix(']')?;
    inner.trim().parse().ok().map(Some)
}

/// Split a news record into page-sized chunks.
///
/// Explicit page markers win; otherwise paragraphs are packed up to
/// `max_words`, and a single oversize paragraph is cut on word boundaries.
pub fn chunk_news(record: &NewsRecord, max_words: usize) -> Vec<ContextShell> {
    let max_words = max_words.max(1);
    let mut pages: Vec<(u32, String)> = Vec::new();
    let has_markers = record.text.lines().any(|l| page_marker(l).is_some());
    if has_markers {
        let mut page = record.page;
        let mut current = String::new();
        let mut started = false;
        for line in record.text.lines() {
            if let Some(explicit) = page_marker(line) {
                if started || !current.trim().is_empty() {
                    pages.push((page, std::mem::take(&mut current)));
                    page += 1;
                }
                if let Some(p) = explicit {
                    page = p;
                }
                started = true;
                continue;
            }
            current.push_str(line);
            current.push('\n');
        }
        pages.push((page, current));
        pages.retain(|(_, t)| !t.trim().is_empty());
    } else {
        pages.push((record.page, record.text.clone()));
    }

    let mut shells = Vec::new();
    for (page, text) in pages {
        for (part, chunk) in pack_paragraphs(&text, max_words).into_iter().enumerate() {
            let mut shell = ContextShell::new(chunk, Modality::News)
                .with("outlet", record.outlet.as_str())
                .with("timestamp", record.timestamp.to_rfc3339())
                .with("stream", record.stream.as_str())
                .with("page", page.to_string())
                .with("part", part.to_string());
            if let Some(title) = &record.title {
                shell = shell.with("title", title.as_str());
            }
            shells.push(shell);
        }
    }
    shells
}

fn pack_paragraphs(text: &str, max_words: usize) -> Vec<String> {
    let mut chunks = Vec::new();
    let mut current: Vec<&str> = Vec::new();
    let mut words = 0;
    let flush = |current: &mut Vec<&str>, chunks: &mut Vec<String>| {
        if !current.is_empty() {
            chunks.push(current.join("\n\n"));
            current.clear();
        }
    };
    for para in text.split("\n\n").map(str::trim).filter(|p| !p.is_empty()) {
        let n = para.split_whitespace().count();
        if n > max_words {
            flush(&mut current, &mut chunks);
            words = 0;
            let tokens: Vec<&str> = para.split_whitespace().collect();
            chunks.extend(tokens.chunks(max_words).map(|c| c.join(" ")));
            continue;
        }
        if words + n > max_words {
            flush(&mut current, &mut chunks);
            words = 0;
        }
        current.push(para);
        words += n;
    }
    flush(&mut current, &mut chunks);
    chunks
}

pub fn news_shells(records: &[NewsRecord], max_words: usize) -> Vec<ContextShell> {
    records.iter().flat_map(|r| chunk_news(r, max_words)).collect()
}

/// Exact top-`k` over the union of several indices, as if they were one
/// mixed-modality store. `SearchHit::entry` counts across the indices in
/// order. Exists as the baseline that per-modality retrieval improves on.
pub fn search_merged(
    indices: &[&VectorIndex],
    embedder: &dyn Embedder,
    query: &str,
    k: usize,
) -> Result<Vec<SearchHit>, VecstoreError> {
    let q = embedder.embed(query);
    let mut scored: Vec<(usize, &IndexEntry, f64)> = Vec::new();
    for index in indices {
        if index.dimension != q.len() {
            return Err(VecstoreError::DimensionMismatch {
                expected: index.dimension,
                got: q.len(),
            });
        }
        let offset = scored.len();
        scored.extend(
            index.entries.iter().enumerate().map(|(i, e)| (offset + i, e, cosine(&q, &e.vector))),
        );
    }
    scored.sort_by(|a, b| b.2.total_cmp(&a.2));
    scored.truncate(k);
    Ok(scored
        .into_iter()
        .map(|(entry, e, score)| SearchHit {
            shell: e.shell.clone(),
            score,
            entry,
        })
        .collect())
}

/// Parse a factor table: `Security Name`, `Ticker`, `Weight`, then one
/// column per factor z-score. Empty factor cells are skipped.
pub fn load_factor_table<R: Read>(reader: R) -> Result<Vec<FactorRecord>, VecstoreError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let expected = ["Security Name", "Ticker", "Weight"];
    if headers.len() < 3 || headers.iter().take(3).ne(expected) {
        return Err(VecstoreError::Parse {
            line: 1,
            message: format!("header must start with {expected:?}"),
        });
    }
    let factors: Vec<String> = headers.iter().skip(3).map(str::to_string).collect();
    let mut out = Vec::new();
    for (i, row) in rdr.records().enumerate() {
        let row = row?;
        let line = i + 2;
        let num = |s: &str, what: &str| {
            s.parse::<f64>().map_err(|_| VecstoreError::Parse {
                line,
                message: format!("{what}: `{s}` is not a number"),
            })
        };
        let weight = num(&row[2], "Weight")?;
        let mut exposures = Vec::new();
        for (f, cell) in factors.iter().zip(row.iter().skip(3)) {
            if cell.is_empty() {
                continue;
            }
            exposures.push(FactorExposure {
                factor: f.clone(),
                z_score: num(cell, f)?,
                as_written: Some(cell.to_string()),
            });
        }
        out.push(FactorRecord {
            security_name: row[0].to_string(),
            ticker: row[1].to_string(),
            weight,
            exposures,
        });
    }
    Ok(out)
}
