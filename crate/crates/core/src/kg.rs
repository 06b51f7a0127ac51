//! Typed supply-chain knowledge graph.
//!
//! Nodes carry one of six entity kinds and a kind-specific metadata set;
//! edges are directed, typed, and optionally weighted in percent. Each
//! economic fact is stored once, in the direction of its relationship
//! signature. Inverse readings (e.g. "sold by" for a `Produces` edge) are
//! derived at traversal time.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::centrality::{self, CentralityTable};

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("line {line}: malformed record: {message}")]
    Malformed { line: usize, message: String },
    #[error("line {line}: duplicate node id `{id}`")]
    DuplicateNode { line: usize, id: NodeId },
    #[error("line {line}: edge endpoint `{id}` does not resolve to a node")]
    DanglingEndpoint { line: usize, id: NodeId },
    #[error("line {line}: {kind} edge cannot connect {src_kind} to {dst_kind}")]
    SchemaViolation {
        line: usize,
        kind: EdgeKind,
        src_kind: NodeKind,
        dst_kind: NodeKind,
    },
    #[error("graph failed validation:\n{0}")]
    Invalid(ValidationReport),
    #[error("unknown node `{0}`")]
    UnknownNode(NodeId),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Opaque node identifier.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub String);

impl NodeId {
    pub fn new(id: impl Into<String>) -> Self {
        NodeId(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for NodeId {
    fn from(s: &str) -> Self {
        NodeId(s.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum NodeKind {
    Company,
    Product,
    InputProduct,
    InputToInputProduct,
    Industry,
    Location,
}

impl NodeKind {
    pub const ALL: [NodeKind; 6] = [
        NodeKind::Company,
        NodeKind::Product,
        NodeKind::InputProduct,
        NodeKind::InputToInputProduct,
        NodeKind::Industry,
        NodeKind::Location,
    ];

    /// Wire name, as used in graph documents.
    pub fn as_str(self) -> &'static str {
        match self {
            NodeKind::Company => "Company",
            NodeKind::Product => "Product",
            NodeKind::InputProduct => "InputProduct",
            NodeKind::InputToInputProduct => "InputToInputProduct",
            NodeKind::Industry => "Industry",
            NodeKind::Location => "Location",
        }
    }

    /// Human-readable label used in rendered text.
    pub fn label(self) -> &'static str {
        match self {
            NodeKind::Company => "Company",
            NodeKind::Product => "Product",
            NodeKind::InputProduct => "Input Product",
            NodeKind::InputToInputProduct => "Input to Input Product",
            NodeKind::Industry => "Industry",
            NodeKind::Location => "Location",
        }
    }

    pub fn is_product_like(self) -> bool {
        matches!(
            self,
            NodeKind::Product | NodeKind::InputProduct | NodeKind::InputToInputProduct
        )
    }

    /// Metadata keys a node of this kind may carry, in rendering order.
    pub fn metadata_keys(self) -> &'static [MetaKey] {
        match self {
            NodeKind::Company => &[MetaKey::Ticker, MetaKey::TotalRevenue],
            NodeKind::Product | NodeKind::InputProduct | NodeKind::InputToInputProduct => &[
                MetaKey::HsCode,
                MetaKey::TotalRevenueShare,
                MetaKey::ProductionCostPercentage,
            ],
            NodeKind::Industry => &[MetaKey::NaicsCode],
            NodeKind::Location => &[
                MetaKey::Longitude,
                MetaKey::Latitude,
                MetaKey::ProductionShare,
            ],
        }
    }
}

impl fmt::Display for NodeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for NodeKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        NodeKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| format!("unknown node kind `{s}`"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum EdgeKind {
    Produces,
    SoldBy,
    BelongsTo,
    HasInput,
    InputTo,
    ManufacturedIn,
    SourcedFrom,
    MadeWith,
    IncludesProduct,
    ProductionLocationFor,
}

impl EdgeKind {
    pub const ALL: [EdgeKind; 10] = [
        EdgeKind::Produces,
        EdgeKind::SoldBy,
        EdgeKind::BelongsTo,
        EdgeKind::HasInput,
        EdgeKind::InputTo,
        EdgeKind::ManufacturedIn,
        EdgeKind::SourcedFrom,
        EdgeKind::MadeWith,
        EdgeKind::IncludesProduct,
        EdgeKind::ProductionLocationFor,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            EdgeKind::Produces => "Produces",
            EdgeKind::SoldBy => "SoldBy",
            EdgeKind::BelongsTo => "BelongsTo",
            EdgeKind::HasInput => "HasInput",
            EdgeKind::InputTo => "InputTo",
            EdgeKind::ManufacturedIn => "ManufacturedIn",
            EdgeKind::SourcedFrom => "SourcedFrom",
            EdgeKind::MadeWith => "MadeWith",
            EdgeKind::IncludesProduct => "IncludesProduct",
            EdgeKind::ProductionLocationFor => "ProductionLocationFor",
        }
    }

    /// (permitted source kinds, permitted target kinds).
    ///
    /// Product rows of the relationship table apply to every product-like
    /// kind (Product, InputProduct, InputToInputProduct).
    pub fn signature(self) -> (&'static [NodeKind], &'static [NodeKind]) {
        const COMPANY: &[NodeKind] = &[NodeKind::Company];
        const PRODUCT_LIKE: &[NodeKind] = &[
            NodeKind::Product,
            NodeKind::InputProduct,
            NodeKind::InputToInputProduct,
        ];
        const INDUSTRY: &[NodeKind] = &[NodeKind::Industry];
        const LOCATION: &[NodeKind] = &[NodeKind::Location];
        match self {
            EdgeKind::Produces => (COMPANY, PRODUCT_LIKE),
            EdgeKind::SoldBy => (PRODUCT_LIKE, COMPANY),
            EdgeKind::BelongsTo => (PRODUCT_LIKE, INDUSTRY),
            EdgeKind::HasInput | EdgeKind::InputTo | EdgeKind::MadeWith => {
                (PRODUCT_LIKE, PRODUCT_LIKE)
            }
            EdgeKind::ManufacturedIn | EdgeKind::SourcedFrom => (PRODUCT_LIKE, LOCATION),
            EdgeKind::IncludesProduct => (INDUSTRY, PRODUCT_LIKE),
            EdgeKind::ProductionLocationFor => (LOCATION, PRODUCT_LIKE),
        }
    }

    pub fn allows(self, src: NodeKind, dst: NodeKind) -> bool {
        let (from, to) = self.signature();
        from.contains(&src) && to.contains(&dst)
    }
}

impl fmt::Display for EdgeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EdgeKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        EdgeKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| format!("unknown edge kind `{s}`"))
    }
}

/// Node metadata keys.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MetaKey {
    Ticker,
    TotalRevenue,
    HsCode,
    TotalRevenueShare,
    ProductionCostPercentage,
    NaicsCode,
    Longitude,
    Latitude,
    ProductionShare,
}

impl MetaKey {
    pub fn as_str(self) -> &'static str {
        match self {
            MetaKey::Ticker => "ticker",
            MetaKey::TotalRevenue => "total_revenue",
            MetaKey::HsCode => "hs_code",
            MetaKey::TotalRevenueShare => "total_revenue_share",
            MetaKey::ProductionCostPercentage => "production_cost_percentage",
            MetaKey::NaicsCode => "naics_code",
            MetaKey::Longitude => "longitude",
            MetaKey::Latitude => "latitude",
            MetaKey::ProductionShare => "production_share",
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            MetaKey::Ticker => "ticker",
            MetaKey::TotalRevenue => "total revenue",
            MetaKey::HsCode => "HS code",
            MetaKey::TotalRevenueShare => "total revenue share",
            MetaKey::ProductionCostPercentage => "production cost percentage",
            MetaKey::NaicsCode => "NAICS code",
            MetaKey::Longitude => "longitude",
            MetaKey::Latitude => "latitude",
            MetaKey::ProductionShare => "production share",
        }
    }

    /// Inclusive numeric range, for numeric keys. `None` for code/text keys.
    fn range(self) -> Option<(f64, f64)> {
        match self {
            MetaKey::TotalRevenueShare
            | MetaKey::ProductionCostPercentage
            | MetaKey::ProductionShare => Some((0.0, 100.0)),
            MetaKey::Latitude => Some((-90.0, 90.0)),
            MetaKey::Longitude => Some((-180.0, 180.0)),
            MetaKey::TotalRevenue => Some((0.0, f64::INFINITY)),
            MetaKey::Ticker | MetaKey::HsCode | MetaKey::NaicsCode => None,
        }
    }

    fn is_percent(self) -> bool {
        matches!(
            self,
            MetaKey::TotalRevenueShare | MetaKey::ProductionCostPercentage | MetaKey::ProductionShare
        )
    }

    fn parse(s: &str) -> Option<MetaKey> {
        use MetaKey::*;
        [
            Ticker,
            TotalRevenue,
            HsCode,
            TotalRevenueShare,
            ProductionCostPercentage,
            NaicsCode,
            Longitude,
            Latitude,
            ProductionShare,
        ]
        .into_iter()
        .find(|k| k.as_str() == s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MetaValue {
    Number(f64),
    Text(String),
}

impl fmt::Display for MetaValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MetaValue::Number(n) => write!(f, "{n}"),
            MetaValue::Text(s) => f.write_str(s),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub id: NodeId,
    pub kind: NodeKind,
    pub name: String,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub meta: BTreeMap<String, MetaValue>,
}

impl Node {
    pub fn new(id: impl Into<String>, kind: NodeKind, name: impl Into<String>) -> Self {
        Node {
            id: NodeId(id.into()),
            kind,
            name: name.into(),
            meta: BTreeMap::new(),
        }
    }

    pub fn with_meta(mut self, key: MetaKey, value: MetaValue) -> Self {
        self.meta.insert(key.as_str().to_string(), value);
        self
    }

    /// Metadata present on this node, in the kind's fixed key order.
    pub fn ordered_meta(&self) -> Vec<(MetaKey, &MetaValue)> {
        self.kind
            .metadata_keys()
            .iter()
            .filter_map(|k| self.meta.get(k.as_str()).map(|v| (*k, v)))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub src: NodeId,
    pub dst: NodeId,
    pub kind: EdgeKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weight_percent: Option<f64>,
}

impl Edge {
    pub fn new(src: impl Into<String>, dst: impl Into<String>, kind: EdgeKind) -> Self {
        Edge {
            src: NodeId(src.into()),
            dst: NodeId(dst.into()),
            kind,
            weight_percent: None,
        }
    }

    pub fn weighted(mut self, percent: f64) -> Self {
        self.weight_percent = Some(percent);
        self
    }
}

/// One line of a graph document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rec", rename_all = "lowercase", deny_unknown_fields)]
pub enum GraphRecord {
    Node {
        id: NodeId,
        kind: NodeKind,
        name: String,
        #[serde(default)]
        meta: BTreeMap<String, MetaValue>,
    },
    Edge {
        src: NodeId,
        dst: NodeId,
        kind: EdgeKind,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        weight_percent: Option<f64>,
    },
}

impl From<&Node> for GraphRecord {
    fn from(n: &Node) -> Self {
        GraphRecord::Node {
            id: n.id.clone(),
            kind: n.kind,
            name: n.name.clone(),
            meta: n.meta.clone(),
        }
    }
}

impl From<&Edge> for GraphRecord {
    fn from(e: &Edge) -> Self {
        GraphRecord::Edge {
            src: e.src.clone(),
            dst: e.dst.clone(),
            kind: e.kind,
            weight_percent: e.weight_percent,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Out,
    In,
    Both,
}

impl FromStr for Direction {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "out" => Ok(Direction::Out),
            "in" => Ok(Direction::In),
            "both" => Ok(Direction::Both),
            _ => Err(format!("unknown direction `{s}`")),
        }
    }
}

/// Whether an edge is walked along its stored direction or against it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Orientation {
    Forward,
    Inverse,
}

/// An adjacent edge paired with the node at its far end.
#[derive(Debug, Clone, Copy)]
pub struct Neighbor<'g> {
    pub edge: &'g Edge,
    pub edge_index: usize,
    pub node: &'g Node,
    pub orientation: Orientation,
}

/// A typed, directed, weighted supply-chain graph. Immutable once built.
#[derive(Debug, Default)]
pub struct KnowledgeGraph {
    nodes: Vec<Node>,
    index: HashMap<NodeId, usize>,
    edges: Vec<Edge>,
    outgoing: Vec<Vec<usize>>,
    incoming: Vec<Vec<usize>>,
    centrality: OnceLock<CentralityTable>,
}

impl Clone for KnowledgeGraph {
    fn clone(&self) -> Self {
        KnowledgeGraph {
            nodes: self.nodes.clone(),
            index: self.index.clone(),
            edges: self.edges.clone(),
            outgoing: self.outgoing.clone(),
            incoming: self.incoming.clone(),
            centrality: OnceLock::new(),
        }
    }
}

impl KnowledgeGraph {
    /// Build a graph and reject it unless it passes [`validate`].
    pub fn from_parts(nodes: Vec<Node>, edges: Vec<Edge>) -> Result<Self, GraphError> {
        let mut seen = HashSet::new();
        for (i, n) in nodes.iter().enumerate() {
            if !seen.insert(&n.id) {
                return Err(GraphError::DuplicateNode {
                    line: i + 1,
                    id: n.id.clone(),
                });
            }
        }
        let graph = Self::from_parts_unchecked(nodes, edges);
        let report = graph.validate();
        if report.is_empty() {
            Ok(graph)
        } else {
            Err(GraphError::Invalid(report))
        }
    }

    /// Build without validation. Dangling edges are kept in the edge list
    /// but left out of adjacency; a later duplicate id shadows the earlier
    /// node in lookups. Intended for tooling that wants a [`validate`]
    /// report over possibly broken data.
    pub fn from_parts_unchecked(nodes: Vec<Node>, edges: Vec<Edge>) -> Self {
        let mut index = HashMap::with_capacity(nodes.len());
        for (i, n) in nodes.iter().enumerate() {
            index.insert(n.id.clone(), i);
        }
        let mut outgoing = vec![Vec::new(); nodes.len()];
        let mut incoming = vec![Vec::new(); nodes.len()];
        for (ei, e) in edges.iter().enumerate() {
            if let (Some(&s), Some(&d)) = (index.get(&e.src), index.get(&e.dst)) {
                outgoing[s].push(ei);
                incoming[d].push(ei);
            }
        }
        KnowledgeGraph {
            nodes,
            index,
            edges,
            outgoing,
            incoming,
            centrality: OnceLock::new(),
        }
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn node(&self, id: &NodeId) -> Option<&Node> {
        self.index.get(id).map(|&i| &self.nodes[i])
    }

    pub fn node_index(&self, id: &NodeId) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn outgoing(&self, node_index: usize) -> &[usize] {
        &self.outgoing[node_index]
    }

    pub fn incoming(&self, node_index: usize) -> &[usize] {
        &self.incoming[node_index]
    }

    /// Precomputed centrality table; computed on first access and cached.
    pub fn centrality(&self) -> &CentralityTable {
        self.centrality.get_or_init(|| centrality::salience(self))
    }

    /// Adjacent edges matching `direction` and the optional kind filter,
    /// ordered by far-end node id, then edge kind.
    pub fn neighbors(
        &self,
        node: &NodeId,
        direction: Direction,
        kinds: Option<&[EdgeKind]>,
    ) -> Result<Vec<Neighbor<'_>>, GraphError> {
        let idx = self
            .node_index(node)
            .ok_or_else(|| GraphError::UnknownNode(node.clone()))?;
        let keep = |e: &Edge| kinds.is_none_or(|ks| ks.contains(&e.kind));
        let mut out = Vec::new();
        if matches!(direction, Direction::Out | Direction::Both) {
            for &ei in &self.outgoing[idx] {
                let edge = &self.edges[ei];
                if keep(edge) {
                    out.push(Neighbor {
                        edge,
                        edge_index: ei,
                        node: &self.nodes[self.index[&edge.dst]],
                        orientation: Orientation::Forward,
                    });
                }
            }
        }
        if matches!(direction, Direction::In | Direction::Both) {
            for &ei in &self.incoming[idx] {
                let edge = &self.edges[ei];
                if keep(edge) {
                    out.push(Neighbor {
                        edge,
                        edge_index: ei,
                        node: &self.nodes[self.index[&edge.src]],
                        orientation: Orientation::Inverse,
                    });
                }
            }
        }
        out.sort_by(|a, b| {
            a.node
                .id
                .cmp(&b.node.id)
                .then(a.edge.kind.cmp(&b.edge.kind))
                .then(a.orientation.cmp(&b.orientation))
                .then(a.edge_index.cmp(&b.edge_index))
        });
        Ok(out)
    }

    /// Case-insensitive substring search over node names, shortest name first.
    pub fn find_nodes_by_name(&self, query: &str) -> Vec<&Node> {
        let needle = query.trim().to_lowercase();
        if needle.is_empty() {
            return Vec::new();
        }
        let mut hits: Vec<&Node> = self
            .nodes
            .iter()
            .filter(|n| n.name.to_lowercase().contains(&needle))
            .collect();
        hits.sort_by(|a, b| {
            a.name
                .chars()
                .count()
                .cmp(&b.name.chars().count())
                .then(a.id.cmp(&b.id))
        });
        hits
    }

    /// Every schema violation, out-of-range value and dangling reference.
    pub fn validate(&self) -> ValidationReport {
        let mut issues = Vec::new();
        let mut seen = HashSet::new();
        for n in &self.nodes {
            if !seen.insert(&n.id) {
                issues.push(Issue::DuplicateNode { id: n.id.clone() });
            }
            if n.name.trim().is_empty() {
                issues.push(Issue::EmptyName { id: n.id.clone() });
            }
            for (key, value) in &n.meta {
                let Some(mk) = MetaKey::parse(key).filter(|k| n.kind.metadata_keys().contains(k))
                else {
                    issues.push(Issue::UnexpectedMetadata {
                        id: n.id.clone(),
                        key: key.clone(),
                    });
                    continue;
                };
                match (mk.range(), value) {
                    (Some((lo, hi)), MetaValue::Number(v)) => {
                        if !(lo..=hi).contains(v) {
                            issues.push(Issue::OutOfRange {
                                id: n.id.clone(),
                                key: key.clone(),
                                value: *v,
                            });
                        }
                    }
                    (Some(_), MetaValue::Text(_)) => issues.push(Issue::WrongMetadataType {
                        id: n.id.clone(),
                        key: key.clone(),
                    }),
                    // Codes may be written either as strings or bare numbers.
                    (None, _) => {}
                }
            }
        }
        for (i, e) in self.edges.iter().enumerate() {
            let src = self.node(&e.src);
            let dst = self.node(&e.dst);
            if src.is_none() {
                issues.push(Issue::Dangling {
                    edge: i,
                    id: e.src.clone(),
                });
            }
            if dst.is_none() {
                issues.push(Issue::Dangling {
                    edge: i,
                    id: e.dst.clone(),
                });
            }
            if let (Some(s), Some(d)) = (src, dst) {
                if !e.kind.allows(s.kind, d.kind) {
                    issues.push(Issue::EdgeSchema {
                        edge: i,
                        kind: e.kind,
                        src_kind: s.kind,
                        dst_kind: d.kind,
                    });
                }
            }
            if let Some(w) = e.weight_percent {
                if !(0.0..=100.0).contains(&w) {
                    issues.push(Issue::WeightOutOfRange { edge: i, value: w });
                }
            }
        }
        ValidationReport { issues }
    }

    /// Serialize as a graph document: node records, then edge records.
    pub fn write_document<W: Write>(&self, mut out: W) -> Result<(), GraphError> {
        for n in &self.nodes {
            write_record(&mut out, &GraphRecord::from(n))?;
        }
        for e in &self.edges {
            write_record(&mut out, &GraphRecord::from(e))?;
        }
        Ok(())
    }

    pub fn to_document(&self) -> String {
        let mut buf = Vec::new();
        self.write_document(&mut buf).expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("serde_json emits UTF-8")
    }
}

fn write_record<W: Write>(out: &mut W, rec: &GraphRecord) -> Result<(), GraphError> {
    serde_json::to_writer(&mut *out, rec).map_err(std::io::Error::from)?;
    out.write_all(b"\n")?;
    Ok(())
}

type Parsed = (Vec<Node>, Vec<(usize, Edge)>);

fn parse_records<R: BufRead>(source: R, reject_duplicates: bool) -> Result<Parsed, GraphError> {
    let mut nodes: Vec<Node> = Vec::new();
    let mut node_lines: HashMap<NodeId, usize> = HashMap::new();
    let mut edges: Vec<(usize, Edge)> = Vec::new();

    for (i, line) in source.lines().enumerate() {
        let line_no = i + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: GraphRecord =
            serde_json::from_str(&line).map_err(|e| GraphError::Malformed {
                line: line_no,
                message: e.to_string(),
            })?;
        match rec {
            GraphRecord::Node { id, kind, name, meta } => {
                if node_lines.insert(id.clone(), line_no).is_some() && reject_duplicates {
                    return Err(GraphError::DuplicateNode { line: line_no, id });
                }
                nodes.push(Node { id, kind, name, meta });
            }
            GraphRecord::Edge {
                src,
                dst,
                kind,
                weight_percent,
            } => edges.push((
                line_no,
                Edge {
                    src,
                    dst,
                    kind,
                    weight_percent,
                },
            )),
        }
    }
    Ok((nodes, edges))
}

/// Parse a graph document without validating it; only malformed lines are
/// errors. Pair with [`KnowledgeGraph::validate`] to report every issue.
pub fn read_graph_unchecked<R: BufRead>(source: R) -> Result<KnowledgeGraph, GraphError> {
    let (nodes, edges) = parse_records(source, false)?;
    Ok(KnowledgeGraph::from_parts_unchecked(
        nodes,
        edges.into_iter().map(|(_, e)| e).collect(),
    ))
}

/// Parse and validate a line-delimited graph document.
///
/// Blank lines are skipped. Errors carry the 1-based line number.
pub fn load_graph<R: BufRead>(source: R) -> Result<KnowledgeGraph, GraphError> {
    let (nodes, edges) = parse_records(source, true)?;

    let kinds: HashMap<&NodeId, NodeKind> = nodes.iter().map(|n| (&n.id, n.kind)).collect();
    for (line, e) in &edges {
        let src_kind = *kinds.get(&e.src).ok_or_else(|| GraphError::DanglingEndpoint {
            line: *line,
            id: e.src.clone(),
        })?;
        let dst_kind = *kinds.get(&e.dst).ok_or_else(|| GraphError::DanglingEndpoint {
            line: *line,
            id: e.dst.clone(),
        })?;
        if !e.kind.allows(src_kind, dst_kind) {
            return Err(GraphError::SchemaViolation {
                line: *line,
                kind: e.kind,
                src_kind,
                dst_kind,
            });
        }
    }

    KnowledgeGraph::from_parts(nodes, edges.into_iter().map(|(_, e)| e).collect())
}

pub fn load_graph_str(document: &str) -> Result<KnowledgeGraph, GraphError> {
    load_graph(document.as_bytes())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "issue", rename_all = "snake_case")]
pub enum Issue {
    DuplicateNode { id: NodeId },
    EmptyName { id: NodeId },
    UnexpectedMetadata { id: NodeId, key: String },
    WrongMetadataType { id: NodeId, key: String },
    OutOfRange { id: NodeId, key: String, value: f64 },
    Dangling { edge: usize, id: NodeId },
    EdgeSchema {
        edge: usize,
        kind: EdgeKind,
        src_kind: NodeKind,
        dst_kind: NodeKind,
    },
    WeightOutOfRange { edge: usize, value: f64 },
}

impl fmt::Display for Issue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Issue::DuplicateNode { id } => write!(f, "node `{id}`: duplicate id"),
            Issue::EmptyName { id } => write!(f, "node `{id}`: empty name"),
            Issue::UnexpectedMetadata { id, key } => {
                write!(f, "node `{id}`: metadata key `{key}` not permitted for its kind")
            }
            Issue::WrongMetadataType { id, key } => {
                write!(f, "node `{id}`: metadata `{key}` must be numeric")
            }
            Issue::OutOfRange { id, key, value } => {
                let unit = MetaKey::parse(key).filter(|k| k.is_percent()).map_or("", |_| "%");
                write!(f, "node `{id}`: {key} = {value}{unit} out of range")
            }
            Issue::Dangling { edge, id } => {
                write!(f, "edge #{edge}: endpoint `{id}` does not exist")
            }
            Issue::EdgeSchema {
                edge,
                kind,
                src_kind,
                dst_kind,
            } => write!(f, "edge #{edge}: {kind} cannot connect {src_kind} to {dst_kind}"),
            Issue::WeightOutOfRange { edge, value } => {
                write!(f, "edge #{edge}: weight {value}% out of range")
            }
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ValidationReport {
    pub issues: Vec<Issue>,
}

impl ValidationReport {
    pub fn is_empty(&self) -> bool {
        self.issues.is_empty()
    }

    pub fn len(&self) -> usize {
        self.issues.len()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.issues.is_empty() {
            return writeln!(f, "ok: no violations");
        }
        for issue in &self.issues {
            writeln!(f, "{issue}")?;
        }
        Ok(())
    }
}
