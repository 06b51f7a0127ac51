//! Fixtures and brute-force oracles shared by the integration tests.
//!
//! The oracles deliberately use different algorithms from the library:
//! Floyd-Warshall with path counting instead of BFS/Brandes, and explicit
//! frontier expansion instead of recursive DFS.
#![allow(dead_code)]

use std::collections::HashMap;
use std::fs::File;
use std::io::BufReader;
use std::path::PathBuf;
use std::sync::Arc;

use chainsight::agents::{Agent, AgentOptions, Portfolio, ScenarioBackend, Stores};
use chainsight::kg::{load_graph, EdgeKind, KnowledgeGraph, Orientation};
use chainsight::traversal::{RiskPath, Subgraph, TraversalConfig};
use chainsight::vecstore::{load_factor_table, load_news_corpus, HashingEmbedder};
use chainsight::verbalizer::{FactorCatalog, PhraseTable};

pub fn data(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("data").join(name)
}

pub fn open(name: &str) -> BufReader<File> {
    BufReader::new(File::open(data(name)).unwrap_or_else(|e| panic!("{name}: {e}")))
}

pub fn open_path(path: &std::path::Path) -> BufReader<File> {
    BufReader::new(File::open(path).unwrap_or_else(|e| panic!("{}: {e}", path.display())))
}

pub fn graph(name: &str) -> KnowledgeGraph {
    load_graph(open(name)).expect("fixture graph loads")
}

pub fn coltan_stores() -> Stores {
    let catalog = FactorCatalog::load(open("factor_definitions.jsonl")).unwrap();
    Stores::build(
        graph("coltan_graph.jsonl"),
        &load_factor_table(open("factors.csv")).unwrap(),
        &catalog,
        &load_news_corpus(open("coltan_news.jsonl")).unwrap(),
        Box::new(HashingEmbedder::default()),
        PhraseTable::default(),
        TraversalConfig::default(),
    )
    .expect("coltan stores build")
}

pub fn portfolio() -> Portfolio {
    Portfolio::from_json(open("portfolio.json")).unwrap()
}

pub fn scenario_agent(scenario: &str, stores: Arc<Stores>, options: AgentOptions) -> Agent {
    let backend = ScenarioBackend::load(open(scenario)).unwrap();
    Agent::new(Arc::new(backend), stores, options)
}

pub const COLTAN_MESSAGES: [&str; 3] = [
    "What is the portfolio's exposure to coltan?",
    "Any recent news on coltan and cobalt supply-chain issues in the DRC?",
    "Which risks does this pose for Apple specifically?",
];

/// Centrality computed from all-pairs distances and shortest-path counts.
#[derive(Debug, Clone)]
pub struct OracleCentrality {
    pub degree: Vec<f64>,
    pub closeness: Vec<f64>,
    pub betweenness: Vec<f64>,
    pub salience: Vec<f64>,
}

pub fn centrality_oracle(n: usize, edges: &[(usize, usize)]) -> OracleCentrality {
    let mut adj = vec![vec![false; n]; n];
    for &(a, b) in edges {
        if a != b {
            adj[a][b] = true;
            adj[b][a] = true;
        }
    }
    const INF: usize = usize::MAX / 4;
    let mut dist = vec![vec![INF; n]; n];
    for i in 0..n {
        dist[i][i] = 0;
        for j in 0..n {
            if adj[i][j] {
                dist[i][j] = 1;
            }
        }
    }
    for k in 0..n {
        for i in 0..n {
            for j in 0..n {
                if dist[i][k] + dist[k][j] < dist[i][j] {
                    dist[i][j] = dist[i][k] + dist[k][j];
                }
            }
        }
    }
    // sigma[s][t]: number of shortest s-t paths, by increasing distance.
    let mut sigma = vec![vec![0f64; n]; n];
    for s in 0..n {
        sigma[s][s] = 1.0;
        let mut order: Vec<usize> = (0..n).filter(|&t| dist[s][t] < INF).collect();
        order.sort_by_key(|&t| dist[s][t]);
        for &t in &order {
            if t == s {
                continue;
            }
            sigma[s][t] = (0..n)
                .filter(|&u| adj[u][t] && dist[s][u] + 1 == dist[s][t])
                .map(|u| sigma[s][u])
                .sum();
        }
    }

    let denom = n.saturating_sub(1) as f64;
    let degree: Vec<f64> = (0..n)
        .map(|v| if n <= 1 { 0.0 } else { adj[v].iter().filter(|&&x| x).count() as f64 / denom })
        .collect();
    let closeness: Vec<f64> = (0..n)
        .map(|v| {
            let reach: Vec<usize> = (0..n).filter(|&u| u != v && dist[v][u] < INF).map(|u| dist[v][u]).collect();
            if n <= 1 || reach.is_empty() {
                return 0.0;
            }
            let r = reach.len() as f64;
            (r / denom) * (r / reach.iter().sum::<usize>() as f64)
        })
        .collect();
    let betweenness: Vec<f64> = (0..n)
        .map(|v| {
            if n <= 2 {
                return 0.0;
            }
            let mut total = 0.0;
            for s in 0..n {
                for t in s + 1..n {
                    if s == v || t == v || dist[s][t] >= INF {
                        continue;
                    }
                    if dist[s][v] + dist[v][t] == dist[s][t] {
                        total += sigma[s][v] * sigma[v][t] / sigma[s][t];
                    }
                }
            }
            total / ((n - 1) * (n - 2) / 2) as f64
        })
        .collect();
    let salience = (0..n).map(|v| (degree[v] + closeness[v] + betweenness[v]) / 3.0).collect();
    OracleCentrality {
        degree,
        closeness,
        betweenness,
        salience,
    }
}

/// Comparable form of a path: node ids plus (kind, orientation, weight)
/// per step. Parallel identical edges yield equal keys, so paths are
/// compared as sorted multisets.
pub type PathKey = (Vec<String>, Vec<(EdgeKind, Orientation, Option<u64>)>);

pub fn path_key(path: &RiskPath) -> PathKey {
    (
        path.nodes.iter().map(|n| n.to_string()).collect(),
        path.edges
            .iter()
            .map(|e| (e.kind, e.orientation, e.weight_percent.map(f64::to_bits)))
            .collect(),
    )
}

/// Every maximal simple path from each seed, by growing partial paths from
/// an explicit work list. A partial path is complete when it has used the
/// seed's budget or its last node has no unvisited neighbor.
pub fn maximal_paths_oracle(sub: &Subgraph) -> Vec<PathKey> {
    let ids: Vec<String> = sub.nodes.iter().map(|n| n.node.id.to_string()).collect();
    let pos: HashMap<&str, usize> = ids.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect();
    let mut out = Vec::new();
    for seed in &sub.seeds {
        let Some(&start) = pos.get(seed.node.as_str()) else { continue };
        let mut work: Vec<(Vec<usize>, Vec<(EdgeKind, Orientation, Option<u64>)>)> = vec![(vec![start], vec![])];
        while let Some((nodes, steps)) = work.pop() {
            let last = *nodes.last().unwrap();
            let mut grew = false;
            if steps.len() < seed.budget {
                for e in &sub.edges {
                    let (s, d) = (pos[e.src.as_str()], pos[e.dst.as_str()]);
                    if s == d {
                        continue;
                    }
                    for (from, to, o) in [(s, d, Orientation::Forward), (d, s, Orientation::Inverse)] {
                        if from == last && !nodes.contains(&to) {
                            let mut n2 = nodes.clone();
                            n2.push(to);
                            let mut s2 = steps.clone();
                            s2.push((e.kind, o, e.weight_percent.map(f64::to_bits)));
                            work.push((n2, s2));
                            grew = true;
                        }
                    }
                }
            }
            if !grew && !steps.is_empty() {
                out.push((nodes.iter().map(|&i| ids[i].clone()).collect(), steps));
            }
        }
    }
    out.sort();
    out
}

/// Plain dot-product cosine over two vectors.
pub fn cosine_oracle(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}
