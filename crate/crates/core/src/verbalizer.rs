//! Graph-to-text rendering: edge phrases, path narratives, node shells and
//! factor context shells.
//!
//! A context shell is a short paragraph that wraps structured values (a
//! factor row, a node, a path) in explanatory sentences, so the numbers sit
//! next to words that give them meaning before they are embedded or placed
//! in a prompt.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::io::BufRead;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kg::{Direction, EdgeKind, KnowledgeGraph, Node, NodeId, NodeKind, Orientation};
use crate::numfmt::format_significant;
use crate::traversal::{PathError, RiskPath};

#[derive(Debug, Error)]
pub enum VerbalizeError {
    #[error("path does not match the graph: {0}")]
    Path(#[from] PathError),
    #[error("unknown node `{0}`")]
    UnknownNode(NodeId),
    #[error("no definition for factor `{0}`")]
    MissingDefinition(String),
    #[error("rendered text still contains placeholder `{0}`")]
    ResidualPlaceholder(String),
    #[error("phrase table line {line}: {message}")]
    PhraseTable { line: usize, message: String },
    #[error("factor definitions line {line}: {message}")]
    Definitions { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Where a shell's content came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Modality {
    Factor,
    News,
    GraphNode,
    GraphPath,
}

impl Modality {
    pub fn as_str(self) -> &'static str {
        match self {
            Modality::Factor => "factor",
            Modality::News => "news",
            Modality::GraphNode => "graph-node",
            Modality::GraphPath => "graph-path",
        }
    }
}

impl fmt::Display for Modality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Modality {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "factor" | "factors" => Ok(Modality::Factor),
            "news" => Ok(Modality::News),
            "graph-node" | "node" | "nodes" => Ok(Modality::GraphNode),
            "graph-path" | "path" | "paths" => Ok(Modality::GraphPath),
            _ => Err(format!("unknown modality `{s}`")),
        }
    }
}

/// Rendered natural-language wrapper plus source metadata.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContextShell {
    pub text: String,
    pub source: Modality,
    #[serde(default)]
    pub metadata: BTreeMap<String, String>,
}

impl ContextShell {
    pub fn new(text: impl Into<String>, source: Modality) -> Self {
        ContextShell {
            text: text.into(),
            source,
            metadata: BTreeMap::new(),
        }
    }

    pub fn with(mut self, key: &str, value: impl Into<String>) -> Self {
        self.metadata.insert(key.to_string(), value.into());
        self
    }

    pub fn meta(&self, key: &str) -> Option<&str> {
        self.metadata.get(key).map(String::as_str)
    }
}

/// Returns the first `{identifier}` token left in `text`, if any.
pub fn residual_placeholder(text: &str) -> Option<&str> {
    let bytes = text.as_bytes();
    let mut i = 0;
    while let Some(off) = text[i..].find('{') {
        let start = i + off;
        let mut j = start + 1;
        while j < bytes.len() && (bytes[j].is_ascii_alphanumeric() || bytes[j] == b'_') {
            j += 1;
        }
        if j > start + 1 && j < bytes.len() && bytes[j] == b'}' {
            return Some(&text[start..=j]);
        }
        i = start + 1;
    }
    None
}

fn ensure_filled(text: &str) -> Result<(), VerbalizeError> {
    match residual_placeholder(text) {
        Some(p) => Err(VerbalizeError::ResidualPlaceholder(p.to_string())),
        None => Ok(()),
    }
}

/// Clause templates for one (edge kind, orientation) pair.
///
/// Slots: `{src}` is the node the walk comes from, `{dst}` the node it
/// reaches, `{w}` the edge weight in percent. `chained` forms are used after
/// a comma when the previous clause ended at `{src}`.
#[derive(Debug, Clone, PartialEq)]
pub struct PhraseTemplate {
    pub weighted: Option<String>,
    pub unweighted: String,
    pub chained_weighted: Option<String>,
    pub chained_unweighted: Option<String>,
}

impl PhraseTemplate {
    fn plain(unweighted: &str) -> Self {
        PhraseTemplate {
            weighted: None,
            unweighted: unweighted.to_string(),
            chained_weighted: None,
            chained_unweighted: None,
        }
    }

    fn with_weight(unweighted: &str, weighted: &str) -> Self {
        PhraseTemplate {
            weighted: Some(weighted.to_string()),
            ..Self::plain(unweighted)
        }
    }

    fn chained_weight(mut self, chained: &str) -> Self {
        self.chained_weighted = Some(chained.to_string());
        self
    }

    fn pick(&self, weight: Option<f64>, chained: bool) -> Option<String> {
        let (explicit, base) = match (weight.is_some(), self.weighted.as_deref()) {
            (true, Some(w)) => (self.chained_weighted.as_deref(), w.to_string()),
            (true, None) => (
                self.chained_unweighted.as_deref(),
                format!("{} ({{w}}%)", self.unweighted),
            ),
            (false, _) => (self.chained_unweighted.as_deref(), self.unweighted.clone()),
        };
        if !chained {
            return Some(base);
        }
        if let Some(c) = explicit {
            let c = if weight.is_some() && self.weighted.is_none() {
                format!("{c} ({{w}}%)")
            } else {
                c.to_string()
            };
            return Some(c);
        }
        base.strip_prefix("{src}").map(|rest| format!("which{rest}"))
    }
}

fn fill(template: &str, src: &str, dst: &str, weight: Option<f64>) -> String {
    let mut out = template.replace("{src}", src).replace("{dst}", dst);
    if let Some(w) = weight {
        out = out.replace("{w}", &format_weight(w));
    }
    out
}

/// Weights are rendered as given: `10.0` prints as `10`, `12.5` as `12.5`.
pub fn format_weight(w: f64) -> String {
    format!("{w}")
}

#[derive(Debug, Clone)]
pub struct PhraseTable {
    entries: HashMap<(EdgeKind, Orientation), PhraseTemplate>,
}

impl Default for PhraseTable {
    fn default() -> Self {
        use EdgeKind::*;
        use Orientation::*;
        let t = PhraseTemplate::plain;
        let tw = PhraseTemplate::with_weight;
        let entries = HashMap::from([
            (
                (Produces, Forward),
                tw("{src} produces {dst}", "{src} generates {w}% of its revenue from selling {dst}"),
            ),
            (
                (Produces, Inverse),
                tw("{src} is produced by {dst}", "{src} accounts for {w}% of the revenue of {dst}"),
            ),
            ((SoldBy, Forward), t("{src} is sold by {dst}")),
            ((SoldBy, Inverse), t("{src} sells {dst}")),
            ((BelongsTo, Forward), t("{src} belongs to the {dst} industry")),
            ((BelongsTo, Inverse), t("the {src} industry includes {dst}")),
            (
                (HasInput, Forward),
                tw(
                    "{src} uses {dst} as an input",
                    "{src} spends {w}% of its production budget on {dst}",
                ),
            ),
            (
                (HasInput, Inverse),
                tw(
                    "{src} is an input to {dst}",
                    "{src} makes up {w}% of the production budget of {dst}",
                ),
            ),
            ((InputTo, Forward), t("{src} is an input to {dst}")),
            ((InputTo, Inverse), t("{src} uses {dst} as an input")),
            (
                (ManufacturedIn, Forward),
                tw("{src} is manufactured in {dst}", "{w}% of {src} are produced in {dst}")
                    .chained_weight("{w}% of which are produced in {dst}"),
            ),
            (
                (ManufacturedIn, Inverse),
                tw(
                    "{src} is a production location for {dst}",
                    "{src} produces {w}% of all {dst}",
                ),
            ),
            ((SourcedFrom, Forward), t("{src} is sourced from {dst}")),
            ((SourcedFrom, Inverse), t("{src} supplies {dst}")),
            ((MadeWith, Forward), t("{src} is made with {dst}")),
            ((MadeWith, Inverse), t("{src} goes into {dst}")),
            ((IncludesProduct, Forward), t("the {src} industry includes {dst}")),
            ((IncludesProduct, Inverse), t("{src} belongs to the {dst} industry")),
            (
                (ProductionLocationFor, Forward),
                t("{src} is a production location for {dst}"),
            ),
            ((ProductionLocationFor, Inverse), t("{src} is produced in {dst}")),
        ]);
        PhraseTable { entries }
    }
}

/// One line of a phrase-table override file.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct PhraseRecord {
    kind: EdgeKind,
    orientation: Orientation,
    template: String,
    #[serde(default)]
    unweighted: Option<String>,
    #[serde(default)]
    chained: Option<String>,
}

fn check_slots(template: &str, allow_weight: bool) -> Result<(), String> {
    let mut rest = template;
    while let Some(p) = residual_placeholder(rest) {
        match p {
            "{src}" | "{dst}" => {}
            "{w}" if allow_weight => {}
            other => return Err(format!("unsupported slot {other}")),
        }
        let at = rest.find(p).unwrap() + p.len();
        rest = &rest[at..];
    }
    Ok(())
}

impl PhraseTable {
    pub fn get(&self, kind: EdgeKind, orientation: Orientation) -> &PhraseTemplate {
        &self.entries[&(kind, orientation)]
    }

    /// Default table with records from a line-delimited override file applied.
    ///
    /// Each record: `{kind, orientation, template, unweighted?, chained?}`.
    /// A template containing `{w}` replaces the weighted form; otherwise it
    /// replaces the unweighted form.
    pub fn with_overrides<R: BufRead>(reader: R) -> Result<Self, VerbalizeError> {
        let mut table = PhraseTable::default();
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let err = |message: String| VerbalizeError::PhraseTable { line: i + 1, message };
            let rec: PhraseRecord = serde_json::from_str(&line).map_err(|e| err(e.to_string()))?;
            check_slots(&rec.template, true).map_err(err)?;
            let entry = table
                .entries
                .get_mut(&(rec.kind, rec.orientation))
                .expect("default table is total");
            let weighted = rec.template.contains("{w}");
            if weighted {
                entry.weighted = Some(rec.template);
                entry.chained_weighted = rec.chained;
            } else {
                entry.unweighted = rec.template;
                entry.chained_unweighted = rec.chained;
            }
            if let Some(u) = rec.unweighted {
                check_slots(&u, false).map_err(err)?;
                entry.unweighted = u;
            }
        }
        Ok(table)
    }

    /// Filled clause for one edge, e.g.
    /// `Apple generates 10% of its revenue from selling Desktop Computers`.
    pub fn edge_phrase(
        &self,
        kind: EdgeKind,
        orientation: Orientation,
        src: &str,
        dst: &str,
        weight: Option<f64>,
    ) -> String {
        let template = self
            .get(kind, orientation)
            .pick(weight, false)
            .expect("unchained form always exists");
        fill(&template, src, dst, weight)
    }

    fn chained_phrase(
        &self,
        kind: EdgeKind,
        orientation: Orientation,
        src: &str,
        dst: &str,
        weight: Option<f64>,
    ) -> Option<String> {
        self.get(kind, orientation)
            .pick(weight, true)
            .map(|t| fill(&t, src, dst, weight))
    }

    /// One narrative for a whole path. Clauses are chained with
    /// ", which ..." where the phrase allows it, otherwise a new sentence
    /// starts.
    pub fn verbalize_path(
        &self,
        path: &RiskPath,
        graph: &KnowledgeGraph,
    ) -> Result<ContextShell, VerbalizeError> {
        path.verify(graph)?;
        let names: Vec<String> = path
            .nodes
            .iter()
            .map(|id| narrative_name(graph.node(id).expect("checked")))
            .collect();

        let mut text = String::new();
        let mut sentence = String::new();
        for (i, step) in path.edges.iter().enumerate() {
            let (src, dst) = (&names[i], &names[i + 1]);
            let chained = (i > 0)
                .then(|| self.chained_phrase(step.kind, step.orientation, src, dst, step.weight_percent))
                .flatten();
            match chained {
                Some(clause) => {
                    sentence.push_str(", ");
                    sentence.push_str(&clause);
                }
                None => {
                    flush_sentence(&mut text, &mut sentence);
                    sentence =
                        self.edge_phrase(step.kind, step.orientation, src, dst, step.weight_percent);
                }
            }
        }
        flush_sentence(&mut text, &mut sentence);
        ensure_filled(&text)?;

        let ids: Vec<&str> = path.nodes.iter().map(NodeId::as_str).collect();
        Ok(ContextShell::new(text, Modality::GraphPath)
            .with("node_ids", ids.join(","))
            .with("score", format_significant(path.score, 6)))
    }

    pub fn render_node_shell(
        &self,
        node: &NodeId,
        graph: &KnowledgeGraph,
    ) -> Result<ContextShell, VerbalizeError> {
        render_node_shell(node, graph)
    }
}

fn flush_sentence(text: &mut String, sentence: &mut String) {
    if sentence.is_empty() {
        return;
    }
    if !text.is_empty() {
        text.push(' ');
    }
    let mut chars = sentence.chars();
    if let Some(first) = chars.next() {
        text.extend(first.to_uppercase());
        text.push_str(chars.as_str());
    }
    text.push('.');
    sentence.clear();
}

const LEGAL_SUFFIXES: &[&str] = &[
    ", Inc.", " Inc.", " Inc", " Corporation", " Corp.", " Ltd.", " Limited", " PLC", " plc",
    " Co.", " N.V.", " S.A.", " AG", " SE",
];

/// Name used inside narratives: companies drop their legal-form suffix
/// ("Apple Inc." reads as "Apple").
pub fn narrative_name(node: &Node) -> String {
    if node.kind == NodeKind::Company {
        for suffix in LEGAL_SUFFIXES {
            if let Some(stem) = node.name.strip_suffix(suffix) {
                if !stem.trim().is_empty() {
                    return stem.trim_end_matches(',').to_string();
                }
            }
        }
    }
    node.name.clone()
}

/// Path narrative with the built-in phrase table.
pub fn verbalize_path(path: &RiskPath, graph: &KnowledgeGraph) -> Result<ContextShell, VerbalizeError> {
    PhraseTable::default().verbalize_path(path, graph)
}

/// Edge clause with the built-in phrase table.
pub fn edge_phrase(
    kind: EdgeKind,
    orientation: Orientation,
    src: &str,
    dst: &str,
    weight: Option<f64>,
) -> String {
    PhraseTable::default().edge_phrase(kind, orientation, src, dst, weight)
}

fn join_list(items: &[String]) -> String {
    match items {
        [] => String::new(),
        [one] => one.clone(),
        [init @ .., last] => format!("{} and {}", init.join(", "), last),
    }
}

/// Paragraph describing a node: kind, metadata in fixed order, and its
/// one-hop neighbors. The name is repeated so it dominates the embedding.
pub fn render_node_shell(id: &NodeId, graph: &KnowledgeGraph) -> Result<ContextShell, VerbalizeError> {
    let node = graph
        .node(id)
        .ok_or_else(|| VerbalizeError::UnknownNode(id.clone()))?;
    let mut text = format!(
        "{} is a {} node in the supply-chain network.",
        node.name,
        node.kind.label()
    );
    let meta: Vec<String> = node
        .ordered_meta()
        .into_iter()
        .map(|(k, v)| {
            let pct = matches!(
                k,
                crate::kg::MetaKey::TotalRevenueShare
                    | crate::kg::MetaKey::ProductionCostPercentage
                    | crate::kg::MetaKey::ProductionShare
            );
            format!("{} {}{}", k.label(), v, if pct { "%" } else { "" })
        })
        .collect();
    if !meta.is_empty() {
        text.push_str(&format!(" {} has {}.", node.name, join_list(&meta)));
    }
    let mut seen = std::collections::HashSet::new();
    let neighbors: Vec<String> = graph
        .neighbors(id, Direction::Both, None)
        .expect("node exists")
        .into_iter()
        .filter(|n| seen.insert(&n.node.id))
        .map(|n| format!("{} ({})", n.node.name, n.node.kind.label()))
        .collect();
    if !neighbors.is_empty() {
        text.push_str(&format!(" {} is linked to {}.", node.name, join_list(&neighbors)));
    }
    ensure_filled(&text)?;
    Ok(ContextShell::new(text, Modality::GraphNode)
        .with("node_id", node.id.as_str())
        .with("kind", node.kind.as_str())
        .with("name", node.name.as_str()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorDefinition {
    pub description: String,
    pub when_high: String,
    pub when_low: String,
}

/// Factor name -> definition.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FactorCatalog {
    definitions: BTreeMap<String, FactorDefinition>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct DefinitionRecord {
    name: String,
    description: String,
    when_high: String,
    when_low: String,
}

impl FactorCatalog {
    /// The two factors whose definitions ship with the crate.
    pub fn builtin() -> Self {
        let mut c = FactorCatalog::default();
        c.insert(
            "Equity Beta",
            FactorDefinition {
                description: "captures market risk beyond the baseline Market factor.".into(),
                when_high: "portfolio tilts toward high-beta stocks, amplifying risk.".into(),
                when_low: "portfolio tilts toward low-beta stocks, partially offsetting risk."
                    .into(),
            },
        );
        c.insert(
            "Book-to-Price",
            FactorDefinition {
                description: "book value divided by market capitalization.".into(),
                when_high: "stock may be undervalued or distressed.".into(),
                when_low: "stock may be overvalued or considered a growth stock.".into(),
            },
        );
        c
    }

    pub fn insert(&mut self, name: &str, def: FactorDefinition) {
        self.definitions.insert(name.to_string(), def);
    }

    pub fn get(&self, name: &str) -> Option<&FactorDefinition> {
        self.definitions.get(name)
    }

    pub fn len(&self) -> usize {
        self.definitions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.definitions.is_empty()
    }

    /// Line-delimited `{name, description, when_high, when_low}` records.
    pub fn load<R: BufRead>(reader: R) -> Result<Self, VerbalizeError> {
        let mut c = FactorCatalog::default();
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let rec: DefinitionRecord =
                serde_json::from_str(&line).map_err(|e| VerbalizeError::Definitions {
                    line: i + 1,
                    message: e.to_string(),
                })?;
            c.insert(
                &rec.name,
                FactorDefinition {
                    description: rec.description,
                    when_high: rec.when_high,
                    when_low: rec.when_low,
                },
            );
        }
        Ok(c)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorExposure {
    pub factor: String,
    pub z_score: f64,
    /// The z-score exactly as it appeared in the source table. Shells print
    /// this when present so values like `1.090` keep their digits.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub as_written: Option<String>,
}

impl FactorExposure {
    pub fn new(factor: impl Into<String>, z_score: f64) -> Self {
        FactorExposure {
            factor: factor.into(),
            z_score,
            as_written: None,
        }
    }

    /// Text printed in the shell.
    pub fn display_z(&self) -> String {
        self.as_written.clone().unwrap_or_else(|| format_z(self.z_score))
    }
}

/// One security's factor row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorRecord {
    pub security_name: String,
    pub ticker: String,
    /// Percent of the portfolio.
    pub weight: f64,
    pub exposures: Vec<FactorExposure>,
}

/// Z-scores print with at most 4 significant digits.
pub fn format_z(z: f64) -> String {
    format_significant(z, 4)
}

pub fn render_factor_shell(
    record: &FactorRecord,
    catalog: &FactorCatalog,
) -> Result<ContextShell, VerbalizeError> {
    let name = &record.security_name;
    let mut text = format!(
        "The position in the portfolio is associated with the security {name} represented by the ticker {}. \
         This position constitutes {}% of the total portfolio. \
         Each of the following factors is given a z-score (mean 0, sd 1) for this equity relative to all other equities.",
        record.ticker,
        format_weight(record.weight),
    );
    for exposure in &record.exposures {
        let def = catalog
            .get(&exposure.factor)
            .ok_or_else(|| VerbalizeError::MissingDefinition(exposure.factor.clone()))?;
        text.push_str(&format!(
            "\n\n{name} {}: {}\nDescription: {}\nWhen High: {}\nWhen Low: {}",
            exposure.factor,
            exposure.display_z(),
            def.description,
            def.when_high,
            def.when_low,
        ));
    }
    ensure_filled(&text)?;
    Ok(ContextShell::new(text, Modality::Factor)
        .with("security", name.as_str())
        .with("ticker", record.ticker.as_str())
        .with("weight", format_weight(record.weight)))
}
