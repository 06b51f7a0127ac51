//! Seed resolution, salience-adaptive neighborhood expansion and ranked
//! path extraction.
//!
//! Hub seeds (salience at or above the threshold) already see a lot in one
//! hop, so they get a shallow budget; peripheral seeds get a deeper one.

use std::collections::{BTreeMap, HashMap, HashSet, VecDeque};
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::centrality::CentralityTable;
use crate::kg::{Direction, Edge, EdgeKind, GraphRecord, KnowledgeGraph, Node, NodeId, Orientation};
use crate::vecstore::{cosine, Embedder, VecstoreError, VectorIndex};
use crate::verbalizer::{render_node_shell, Modality, VerbalizeError};

#[derive(Debug, Error)]
pub enum TraversalError {
    #[error("unknown seed node `{0}`")]
    UnknownSeed(NodeId),
    #[error("invalid traversal config: {0}")]
    InvalidConfig(String),
    #[error("node index entry {0} has no node_id metadata")]
    UnlabelledIndexEntry(usize),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Vecstore(#[from] VecstoreError),
    #[error(transparent)]
    Verbalize(#[from] VerbalizeError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Error, PartialEq)]
pub enum PathError {
    #[error("{nodes} nodes for {edges} edges")]
    Malformed { nodes: usize, edges: usize },
    #[error("node `{0}` appears twice")]
    Repeated(NodeId),
    #[error("unknown node `{0}`")]
    UnknownNode(NodeId),
    #[error("step {step}: no {kind} edge from `{from}` to `{to}` in {orientation:?} orientation")]
    Mismatch {
        step: usize,
        kind: EdgeKind,
        from: NodeId,
        to: NodeId,
        orientation: Orientation,
    },
}

/// A query mention matched to a graph node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedMatch {
    pub mention: String,
    pub node: NodeId,
    pub similarity: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode", content = "value")]
pub enum SalienceThreshold {
    /// Threshold at this quantile of the graph's salience distribution.
    Quantile(f64),
    Absolute(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Ranking {
    /// Product of edge weights as fractions; unweighted edges count as 1.
    WeightProduct,
    /// Mean salience of the path's nodes.
    SalienceSum,
}

impl std::str::FromStr for Ranking {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "weight-product" => Ok(Ranking::WeightProduct),
            "salience-sum" => Ok(Ranking::SalienceSum),
            _ => Err(format!("unknown ranking `{s}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TraversalConfig {
    pub threshold: SalienceThreshold,
    pub hub_hops: usize,
    pub peripheral_hops: usize,
    pub max_hops: usize,
    /// Top-k paths returned; `None` returns every path.
    pub max_paths: Option<usize>,
    pub ranking: Ranking,
    /// Forces every seed's budget (still capped by `max_hops`).
    pub fixed_hops: Option<usize>,
    /// Seeds kept per mention.
    pub seeds_per_mention: usize,
    /// Below this best cosine score, seed resolution falls back to name search.
    pub similarity_floor: f64,
}

impl Default for TraversalConfig {
    fn default() -> Self {
        TraversalConfig {
            threshold: SalienceThreshold::Quantile(0.5),
            hub_hops: 1,
            peripheral_hops: 2,
            max_hops: 3,
            max_paths: Some(10),
            ranking: Ranking::WeightProduct,
            fixed_hops: None,
            seeds_per_mention: 1,
            similarity_floor: 0.35,
        }
    }
}

impl TraversalConfig {
    pub fn validate(&self) -> Result<(), TraversalError> {
        if !(1 <= self.hub_hops && self.hub_hops <= self.peripheral_hops && self.peripheral_hops <= self.max_hops) {
            return Err(TraversalError::InvalidConfig(format!(
                "need 1 <= hub_hops ({}) <= peripheral_hops ({}) <= max_hops ({})",
                self.hub_hops, self.peripheral_hops, self.max_hops
            )));
        }
        if self.fixed_hops == Some(0) {
            return Err(TraversalError::InvalidConfig("fixed_hops must be positive".into()));
        }
        if self.max_paths == Some(0) {
            return Err(TraversalError::InvalidConfig("max_paths must be positive (null means unlimited)".into()));
        }
        if self.seeds_per_mention == 0 {
            return Err(TraversalError::InvalidConfig("seeds_per_mention must be positive".into()));
        }
        if let SalienceThreshold::Quantile(q) = self.threshold {
            if !(0.0..=1.0).contains(&q) {
                return Err(TraversalError::InvalidConfig(format!("quantile {q} outside [0, 1]")));
            }
        }
        Ok(())
    }

    pub fn threshold_value(&self, table: &CentralityTable) -> f64 {
        match self.threshold {
            SalienceThreshold::Quantile(q) => table.salience_quantile(q),
            SalienceThreshold::Absolute(v) => v,
        }
    }
}

/// Hop budget for a seed of the given salience. Ties go to the hub side.
pub fn hop_budget(salience: f64, table: &CentralityTable, config: &TraversalConfig) -> usize {
    budget_for(salience, config.threshold_value(table), config)
}

fn budget_for(salience: f64, threshold: f64, config: &TraversalConfig) -> usize {
    let hops = match config.fixed_hops {
        Some(h) => h,
        None if salience >= threshold => config.hub_hops,
        None => config.peripheral_hops,
    };
    hops.clamp(1, config.max_hops.max(1))
}

/// Index of rendered node shells, one entry per graph node.
pub fn build_node_index(
    graph: &KnowledgeGraph,
    embedder: &dyn Embedder,
) -> Result<VectorIndex, TraversalError> {
    let shells = graph
        .nodes()
        .iter()
        .map(|n| render_node_shell(&n.id, graph))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(VectorIndex::build(shells, embedder, Modality::GraphNode)?)
}

/// Match each mention to its closest node shells. When the best cosine
/// score is below `config.similarity_floor`, case-insensitive name matches
/// are used instead (if there are any).
pub fn resolve_seeds(
    mentions: &[String],
    node_index: &VectorIndex,
    embedder: &dyn Embedder,
    graph: &KnowledgeGraph,
    config: &TraversalConfig,
) -> Result<Vec<SeedMatch>, TraversalError> {
    let k = config.seeds_per_mention.max(1);
    let mut out = Vec::new();
    for mention in mentions {
        let query = embedder.embed(mention);
        let hits = node_index.search_vector(&query, k, None)?;
        let mut matches = Vec::with_capacity(hits.len());
        for hit in &hits {
            let id = hit
                .shell
                .meta("node_id")
                .ok_or(TraversalError::UnlabelledIndexEntry(hit.entry))?;
            matches.push(SeedMatch {
                mention: mention.clone(),
                node: NodeId::new(id),
                similarity: hit.score,
            });
        }
        let weak = hits.first().is_none_or(|h| h.score < config.similarity_floor);
        if weak {
            let lexical: Vec<SeedMatch> = graph
                .find_nodes_by_name(mention)
                .into_iter()
                .take(k)
                .map(|n| SeedMatch {
                    mention: mention.clone(),
                    node: n.id.clone(),
                    similarity: node_index
                        .find_by_meta("node_id", n.id.as_str())
                        .map_or(0.0, |e| cosine(&query, &e.vector)),
                })
                .collect();
            if !lexical.is_empty() {
                matches = lexical;
            }
        }
        matches.sort_by(|a, b| b.similarity.total_cmp(&a.similarity));
        out.extend(matches);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedBudget {
    pub node: NodeId,
    pub salience: f64,
    pub budget: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubgraphNode {
    pub node: Node,
    /// Hop distance from the nearest seed.
    pub hops: usize,
    pub salience: f64,
}

/// Union of the seeds' neighborhoods, with every graph edge between two
/// retained nodes (cross-edges included).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Subgraph {
    pub seeds: Vec<SeedBudget>,
    pub nodes: Vec<SubgraphNode>,
    pub edges: Vec<Edge>,
}

impl Subgraph {
    pub fn contains(&self, id: &NodeId) -> bool {
        self.nodes.iter().any(|n| &n.node.id == id)
    }

    pub fn node_ids(&self) -> Vec<&NodeId> {
        self.nodes.iter().map(|n| &n.node.id).collect()
    }

    /// Node and edge records in the graph document format.
    pub fn write_records<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for n in &self.nodes {
            serde_json::to_writer(&mut out, &GraphRecord::from(&n.node))?;
            out.write_all(b"\n")?;
        }
        for e in &self.edges {
            serde_json::to_writer(&mut out, &GraphRecord::from(e))?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }
}

/// Breadth-first expansion from each seed over both edge directions, up to
/// that seed's hop budget.
pub fn traverse(
    graph: &KnowledgeGraph,
    seeds: &[SeedMatch],
    table: &CentralityTable,
    config: &TraversalConfig,
) -> Result<Subgraph, TraversalError> {
    config.validate()?;
    let threshold = config.threshold_value(table);
    let mut budgets: Vec<SeedBudget> = Vec::new();
    for s in seeds {
        if graph.node(&s.node).is_none() {
            return Err(TraversalError::UnknownSeed(s.node.clone()));
        }
        if budgets.iter().any(|b| b.node == s.node) {
            continue;
        }
        let salience = table.salience_of(&s.node).unwrap_or(0.0);
        budgets.push(SeedBudget {
            node: s.node.clone(),
            salience,
            budget: budget_for(salience, threshold, config),
        });
    }

    let mut hops: HashMap<usize, usize> = HashMap::new();
    for seed in &budgets {
        let start = graph.node_index(&seed.node).expect("checked above");
        let mut dist: HashMap<usize, usize> = HashMap::from([(start, 0)]);
        let mut queue = VecDeque::from([start]);
        while let Some(v) = queue.pop_front() {
            let d = dist[&v];
            if d == seed.budget {
                continue;
            }
            let far_ends = graph
                .outgoing(v)
                .iter()
                .map(|&e| &graph.edges()[e].dst)
                .chain(graph.incoming(v).iter().map(|&e| &graph.edges()[e].src));
            for id in far_ends {
                let w = graph.node_index(id).expect("adjacency is resolved");
                if let std::collections::hash_map::Entry::Vacant(slot) = dist.entry(w) {
                    slot.insert(d + 1);
                    queue.push_back(w);
                }
            }
        }
        for (v, d) in dist {
            let entry = hops.entry(v).or_insert(d);
            *entry = (*entry).min(d);
        }
    }

    let mut nodes: Vec<SubgraphNode> = hops
        .iter()
        .map(|(&v, &h)| {
            let node = graph.nodes()[v].clone();
            let salience = table.salience_of(&node.id).unwrap_or(0.0);
            SubgraphNode { node, hops: h, salience }
        })
        .collect();
    nodes.sort_by(|a, b| a.hops.cmp(&b.hops).then_with(|| a.node.id.cmp(&b.node.id)));

    let kept: HashSet<&NodeId> = nodes.iter().map(|n| &n.node.id).collect();
    let edges = graph
        .edges()
        .iter()
        .filter(|e| kept.contains(&e.src) && kept.contains(&e.dst))
        .cloned()
        .collect();

    Ok(Subgraph {
        seeds: budgets,
        nodes,
        edges,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PathEdge {
    pub kind: EdgeKind,
    pub orientation: Orientation,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weight_percent: Option<f64>,
}

impl PathEdge {
    pub fn forward(kind: EdgeKind, weight_percent: Option<f64>) -> Self {
        PathEdge {
            kind,
            orientation: Orientation::Forward,
            weight_percent,
        }
    }

    pub fn inverse(kind: EdgeKind, weight_percent: Option<f64>) -> Self {
        PathEdge {
            kind,
            orientation: Orientation::Inverse,
            weight_percent,
        }
    }
}

/// Alternating node/edge sequence; the unit of graph retrieval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RiskPath {
    pub nodes: Vec<NodeId>,
    pub edges: Vec<PathEdge>,
    pub score: f64,
}

impl RiskPath {
    pub fn len(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }

    /// Check every step against `graph`: the stated edge exists in the
    /// stated orientation, and no node repeats.
    pub fn verify(&self, graph: &KnowledgeGraph) -> Result<(), PathError> {
        if self.nodes.is_empty() || self.nodes.len() != self.edges.len() + 1 {
            return Err(PathError::Malformed {
                nodes: self.nodes.len(),
                edges: self.edges.len(),
            });
        }
        let mut seen = HashSet::new();
        for id in &self.nodes {
            if graph.node(id).is_none() {
                return Err(PathError::UnknownNode(id.clone()));
            }
            if !seen.insert(id) {
                return Err(PathError::Repeated(id.clone()));
            }
        }
        for (i, step) in self.edges.iter().enumerate() {
            let (from, to) = (&self.nodes[i], &self.nodes[i + 1]);
            let (src, dst) = match step.orientation {
                Orientation::Forward => (from, to),
                Orientation::Inverse => (to, from),
            };
            let found = graph
                .neighbors(src, Direction::Out, Some(&[step.kind]))
                .expect("node checked")
                .iter()
                .any(|n| &n.node.id == dst && n.edge.weight_percent == step.weight_percent);
            if !found {
                return Err(PathError::Mismatch {
                    step: i,
                    kind: step.kind,
                    from: from.clone(),
                    to: to.clone(),
                    orientation: step.orientation,
                });
            }
        }
        Ok(())
    }
}

/// Score a path: weight-product or mean node salience.
pub fn score_path(path: &RiskPath, ranking: Ranking, salience: &dyn Fn(&NodeId) -> f64) -> f64 {
    match ranking {
        Ranking::WeightProduct => path
            .edges
            .iter()
            .map(|e| e.weight_percent.map_or(1.0, |w| w / 100.0))
            .product(),
        Ranking::SalienceSum => {
            path.nodes.iter().map(salience).sum::<f64>() / path.nodes.len() as f64
        }
    }
}

/// Descending score, then ascending node-id sequence, then edge sequence.
pub fn rank_paths(paths: &mut [RiskPath]) {
    paths.sort_by(|a, b| {
        b.score
            .total_cmp(&a.score)
            .then_with(|| a.nodes.cmp(&b.nodes))
            .then_with(|| {
                let key = |p: &RiskPath| -> Vec<(EdgeKind, Orientation)> {
                    p.edges.iter().map(|e| (e.kind, e.orientation)).collect()
                };
                key(a).cmp(&key(b))
            })
    });
}

/// Enumerate maximal simple paths from each seed inside the subgraph: a path
/// ends when it has used the seed's whole budget or cannot be extended
/// without revisiting a node. Paths are scored, ranked, and cut to
/// `config.max_paths`.
pub fn extract_paths(subgraph: &Subgraph, config: &TraversalConfig) -> Vec<RiskPath> {
    let index: HashMap<&NodeId, usize> = subgraph
        .nodes
        .iter()
        .enumerate()
        .map(|(i, n)| (&n.node.id, i))
        .collect();
    let mut adjacency: Vec<Vec<(usize, usize, Orientation)>> = vec![Vec::new(); subgraph.nodes.len()];
    for (ei, e) in subgraph.edges.iter().enumerate() {
        let (Some(&s), Some(&d)) = (index.get(&e.src), index.get(&e.dst)) else {
            continue;
        };
        if s == d {
            continue;
        }
        adjacency[s].push((d, ei, Orientation::Forward));
        adjacency[d].push((s, ei, Orientation::Inverse));
    }
    let ids: Vec<&NodeId> = subgraph.nodes.iter().map(|n| &n.node.id).collect();
    for list in &mut adjacency {
        list.sort_by(|a, b| {
            ids[a.0]
                .cmp(ids[b.0])
                .then(subgraph.edges[a.1].kind.cmp(&subgraph.edges[b.1].kind))
                .then(a.2.cmp(&b.2))
                .then(a.1.cmp(&b.1))
        });
    }
    let salience: BTreeMap<&NodeId, f64> =
        subgraph.nodes.iter().map(|n| (&n.node.id, n.salience)).collect();
    let lookup = |id: &NodeId| salience.get(id).copied().unwrap_or(0.0);

    let mut paths = Vec::new();
    for seed in &subgraph.seeds {
        let Some(&start) = index.get(&seed.node) else {
            continue;
        };
        let mut walk = Walk {
            adjacency: &adjacency,
            budget: seed.budget,
            nodes: vec![start],
            steps: Vec::new(),
            on_path: HashSet::from([start]),
            found: Vec::new(),
        };
        walk.dfs();
        for (nodes, steps) in walk.found {
            let mut path = RiskPath {
                nodes: nodes.iter().map(|&i| ids[i].clone()).collect(),
                edges: steps
                    .iter()
                    .map(|&(ei, o)| PathEdge {
                        kind: subgraph.edges[ei].kind,
                        orientation: o,
                        weight_percent: subgraph.edges[ei].weight_percent,
                    })
                    .collect(),
                score: 0.0,
            };
            path.score = score_path(&path, config.ranking, &lookup);
            paths.push(path);
        }
    }
    rank_paths(&mut paths);
    if let Some(k) = config.max_paths {
        paths.truncate(k);
    }
    paths
}

struct Walk<'a> {
    adjacency: &'a [Vec<(usize, usize, Orientation)>],
    budget: usize,
    nodes: Vec<usize>,
    steps: Vec<(usize, Orientation)>,
    on_path: HashSet<usize>,
    found: Vec<(Vec<usize>, Vec<(usize, Orientation)>)>,
}

impl Walk<'_> {
    fn dfs(&mut self) {
        let here = *self.nodes.last().expect("walk starts at the seed");
        let extensions: Vec<(usize, usize, Orientation)> = if self.steps.len() < self.budget {
            self.adjacency[here]
                .iter()
                .filter(|(w, _, _)| !self.on_path.contains(w))
                .copied()
                .collect()
        } else {
            Vec::new()
        };
        if extensions.is_empty() {
            if !self.steps.is_empty() {
                self.found.push((self.nodes.clone(), self.steps.clone()));
            }
            return;
        }
        for (w, ei, o) in extensions {
            self.nodes.push(w);
            self.steps.push((ei, o));
            self.on_path.insert(w);
            self.dfs();
            self.on_path.remove(&w);
            self.steps.pop();
            self.nodes.pop();
        }
    }
}

#[derive(Serialize)]
struct PathRecordOut<'a> {
    rec: &'static str,
    #[serde(flatten)]
    path: &'a RiskPath,
}

pub fn write_path_records<W: Write>(paths: &[RiskPath], mut out: W) -> std::io::Result<()> {
    for path in paths {
        serde_json::to_writer(&mut out, &PathRecordOut { rec: "path", path })?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

/// Read `path` records from a line-delimited file; node and edge records
/// (as written alongside a subgraph) are skipped.
pub fn read_path_records<R: BufRead>(reader: R) -> Result<Vec<RiskPath>, TraversalError> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let err = |message: String| TraversalError::Parse { line: i + 1, message };
        let mut value: serde_json::Value = serde_json::from_str(&line).map_err(|e| err(e.to_string()))?;
        let obj = value.as_object_mut().ok_or_else(|| err("record is not an object".into()))?;
        match obj.remove("rec").as_ref().and_then(|r| r.as_str()) {
            Some("path") => out.push(serde_json::from_value(value).map_err(|e| err(e.to_string()))?),
            Some("node" | "edge") => {}
            other => return Err(err(format!("unexpected record type {other:?}"))),
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kg::{load_graph_str, NodeKind};
    use crate::vecstore::HashingEmbedder;

    const APPLE_PATH: &str = include_str!("../data/apple_path.jsonl");

    fn seed(id: &str) -> SeedMatch {
        SeedMatch {
            mention: id.into(),
            node: id.into(),
            similarity: 1.0,
        }
    }

    #[test]
    fn hop_budget_policy() {
        let ids: Vec<NodeId> = ["a", "b", "c"].into_iter().map(NodeId::from).collect();
        let z = [0.0; 3];
        // saliences 0.1, 0.5, 0.9 -> median 0.5
        let table = CentralityTable::from_measures(ids, &[0.3, 1.5, 2.7], &z, &z);
        let cfg = TraversalConfig::default();
        assert!((table.median_salience() - 0.5).abs() < 1e-12);
        assert_eq!(hop_budget(0.9, &table, &cfg), 1);
        assert_eq!(hop_budget(0.1, &table, &cfg), 2);
        assert_eq!(hop_budget(table.median_salience(), &table, &cfg), 1);
        let capped = TraversalConfig {
            fixed_hops: Some(7),
            ..cfg.clone()
        };
        assert_eq!(hop_budget(0.1, &table, &capped), 3);
        let absolute = TraversalConfig {
            threshold: SalienceThreshold::Absolute(0.95),
            ..cfg
        };
        assert_eq!(hop_budget(0.9, &table, &absolute), 2);
    }

    #[test]
    fn config_validation() {
        let bad = TraversalConfig {
            hub_hops: 3,
            peripheral_hops: 2,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        assert!(TraversalConfig::default().validate().is_ok());
    }

    #[test]
    fn apple_top_path_budget_three() {
        let g = load_graph_str(APPLE_PATH).unwrap();
        let cfg = TraversalConfig {
            fixed_hops: Some(3),
            ..Default::default()
        };
        let sub = traverse(&g, &[seed("apple")], g.centrality(), &cfg).unwrap();
        assert_eq!(sub.nodes.len(), 4);
        let paths = extract_paths(&sub, &cfg);
        assert_eq!(paths.len(), 1);
        let top = &paths[0];
        assert_eq!(
            top.nodes,
            ["apple", "desktops", "ics", "shanghai"].map(NodeId::from).to_vec()
        );
        assert!((top.score - 0.10 * 0.19 * 0.13).abs() < 1e-15);
        assert!((top.score - 0.00247).abs() < 1e-12);
        top.verify(&g).unwrap();
    }

    #[test]
    fn isolated_seed() {
        let g = KnowledgeGraph::from_parts(vec![Node::new("x", NodeKind::Company, "Lonely Co")], vec![])
            .unwrap();
        let cfg = TraversalConfig {
            fixed_hops: Some(3),
            ..Default::default()
        };
        let sub = traverse(&g, &[seed("x")], g.centrality(), &cfg).unwrap();
        assert_eq!(sub.node_ids(), vec![&NodeId::from("x")]);
        assert!(sub.edges.is_empty());
        assert!(extract_paths(&sub, &cfg).is_empty());
    }

    #[test]
    fn unknown_seed() {
        let g = load_graph_str(APPLE_PATH).unwrap();
        assert!(matches!(
            traverse(&g, &[seed("ghost")], g.centrality(), &TraversalConfig::default()),
            Err(TraversalError::UnknownSeed(_))
        ));
    }

    #[test]
    fn single_edge_graph_gives_one_path() {
        let g = KnowledgeGraph::from_parts(
            vec![
                Node::new("c", NodeKind::Company, "Acme"),
                Node::new("p", NodeKind::Product, "Anvils"),
            ],
            vec![Edge::new("c", "p", EdgeKind::Produces)],
        )
        .unwrap();
        let sub = traverse(&g, &[seed("c")], g.centrality(), &TraversalConfig::default()).unwrap();
        let paths = extract_paths(&sub, &TraversalConfig::default());
        assert_eq!(paths.len(), 1);
        assert_eq!(paths[0].len(), 1);
        assert_eq!(paths[0].score, 1.0);
    }

    #[test]
    fn top_k_of_five() {
        let mut nodes = vec![Node::new("c", NodeKind::Company, "Acme")];
        let mut edges = Vec::new();
        for (i, w) in [5.0, 30.0, 12.0, 45.0, 8.0].into_iter().enumerate() {
            let id = format!("p{i}");
            nodes.push(Node::new(id.clone(), NodeKind::Product, format!("Product {i}")));
            edges.push(Edge::new("c", id, EdgeKind::Produces).weighted(w));
        }
        let g = KnowledgeGraph::from_parts(nodes, edges).unwrap();
        let cfg = TraversalConfig {
            max_paths: Some(2),
            ..Default::default()
        };
        let sub = traverse(&g, &[seed("c")], g.centrality(), &cfg).unwrap();
        let paths = extract_paths(&sub, &cfg);
        assert_eq!(paths.len(), 2);
        assert_eq!(paths[0].nodes[1], NodeId::from("p3"));
        assert_eq!(paths[1].nodes[1], NodeId::from("p1"));
    }

    #[test]
    fn inverse_edges_are_walked_and_recorded() {
        let g = load_graph_str(APPLE_PATH).unwrap();
        let cfg = TraversalConfig {
            fixed_hops: Some(3),
            ..Default::default()
        };
        let sub = traverse(&g, &[seed("shanghai")], g.centrality(), &cfg).unwrap();
        let paths = extract_paths(&sub, &cfg);
        assert_eq!(paths.len(), 1);
        assert!(paths[0].edges.iter().all(|e| e.orientation == Orientation::Inverse));
        paths[0].verify(&g).unwrap();
    }

    #[test]
    fn verify_catches_bad_paths() {
        let g = load_graph_str(APPLE_PATH).unwrap();
        let p = RiskPath {
            nodes: ["apple", "desktops", "apple"].map(NodeId::from).to_vec(),
            edges: vec![
                PathEdge::forward(EdgeKind::Produces, Some(10.0)),
                PathEdge::inverse(EdgeKind::Produces, Some(10.0)),
            ],
            score: 0.0,
        };
        assert_eq!(p.verify(&g), Err(PathError::Repeated("apple".into())));
        let wrong_weight = RiskPath {
            nodes: ["apple", "desktops"].map(NodeId::from).to_vec(),
            edges: vec![PathEdge::forward(EdgeKind::Produces, Some(11.0))],
            score: 0.0,
        };
        assert!(matches!(wrong_weight.verify(&g), Err(PathError::Mismatch { .. })));
    }

    #[test]
    fn seed_resolution() {
        let g = load_graph_str(APPLE_PATH).unwrap();
        let e = HashingEmbedder::default();
        let idx = build_node_index(&g, &e).unwrap();
        let cfg = TraversalConfig::default();
        let seeds = resolve_seeds(&["Apple".to_string()], &idx, &e, &g, &cfg).unwrap();
        assert_eq!(seeds[0].node, NodeId::from("apple"));
        assert!(resolve_seeds(&[], &idx, &e, &g, &cfg).unwrap().is_empty());
        let small = HashingEmbedder::new(16);
        assert!(resolve_seeds(&["Apple".to_string()], &idx, &small, &g, &cfg).is_err());
    }

    #[test]
    fn path_records_round_trip() {
        let paths = vec![RiskPath {
            nodes: ["apple", "desktops"].map(NodeId::from).to_vec(),
            edges: vec![PathEdge::forward(EdgeKind::Produces, Some(10.0))],
            score: 0.1,
        }];
        let mut buf = Vec::new();
        write_path_records(&paths, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with(r#"{"rec":"path","nodes":["apple","desktops"]"#));
        let mixed = format!("{}{}", APPLE_PATH.lines().next().unwrap(), "\n") + &text;
        assert_eq!(read_path_records(mixed.as_bytes()).unwrap(), paths);
        assert!(read_path_records(r#"{"rec":"blob"}"#.as_bytes()).is_err());
    }
}
