//! Degree, closeness and betweenness centrality on the undirected
//! projection of a knowledge graph, plus their mean ("salience").
//!
//! All three measures are unweighted and normalized to `[0, 1]`. Parallel
//! edges and self-loops are ignored. Closeness is component-scoped with the
//! Wasserman-Faust correction so disconnected graphs stay well-defined.

use std::collections::{HashMap, VecDeque};
use std::fmt::Write as _;
use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;

use crate::kg::{KnowledgeGraph, NodeId};
use crate::numfmt::format_significant;

/// Simple undirected graph over dense node indices.
#[derive(Debug, Clone)]
pub struct Projection {
    adjacency: Vec<Vec<usize>>,
}

impl Projection {
    /// Undirected view of `edges` over `n` nodes; duplicates and self-loops dropped.
    pub fn from_edges(n: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Self {
        let mut adjacency = vec![Vec::new(); n];
        for (a, b) in edges {
            if a == b {
                continue;
            }
            adjacency[a].push(b);
            adjacency[b].push(a);
        }
        for list in &mut adjacency {
            list.sort_unstable();
            list.dedup();
        }
        Projection { adjacency }
    }

    pub fn from_graph(graph: &KnowledgeGraph) -> Self {
        let edges = graph.edges().iter().filter_map(|e| {
            Some((graph.node_index(&e.src)?, graph.node_index(&e.dst)?))
        });
        Self::from_edges(graph.node_count(), edges)
    }

    pub fn len(&self) -> usize {
        self.adjacency.len()
    }

    pub fn is_empty(&self) -> bool {
        self.adjacency.is_empty()
    }

    pub fn neighbors(&self, v: usize) -> &[usize] {
        &self.adjacency[v]
    }

    pub fn degree(&self) -> Vec<f64> {
        let n = self.len();
        if n <= 1 {
            return vec![0.0; n];
        }
        let denom = (n - 1) as f64;
        self.adjacency.iter().map(|a| a.len() as f64 / denom).collect()
    }

    pub fn closeness(&self) -> Vec<f64> {
        let n = self.len();
        if n <= 1 {
            return vec![0.0; n];
        }
        (0..n)
            .into_par_iter()
            .map(|v| {
                let dist = self.bfs(v);
                let (reached, total) = dist
                    .iter()
                    .enumerate()
                    .filter(|&(u, d)| u != v && d.is_some())
                    .fold((0usize, 0usize), |(r, t), (_, d)| (r + 1, t + d.unwrap()));
                if reached == 0 {
                    0.0
                } else {
                    let r = reached as f64;
                    (r / (n - 1) as f64) * (r / total as f64)
                }
            })
            .collect()
    }

    /// Brandes accumulation, normalized by `(n-1)(n-2)/2`.
    pub fn betweenness(&self) -> Vec<f64> {
        let n = self.len();
        if n <= 2 {
            return vec![0.0; n];
        }
        // Per-source dependency vectors are summed in source order so the
        // result does not depend on the thread schedule.
        let per_source: Vec<Vec<f64>> = (0..n)
            .into_par_iter()
            .map(|s| self.brandes_dependencies(s))
            .collect();
        let mut raw = vec![0.0; n];
        for deps in &per_source {
            for (acc, d) in raw.iter_mut().zip(deps) {
                *acc += d;
            }
        }
        // each unordered pair was counted from both endpoints
        let scale = 1.0 / ((n - 1) as f64 * (n - 2) as f64);
        raw.into_iter().map(|b| b * scale).collect()
    }

    fn bfs(&self, source: usize) -> Vec<Option<usize>> {
        let mut dist = vec![None; self.len()];
        dist[source] = Some(0);
        let mut queue = VecDeque::from([source]);
        while let Some(v) = queue.pop_front() {
            let dv = dist[v].unwrap();
            for &w in &self.adjacency[v] {
                if dist[w].is_none() {
                    dist[w] = Some(dv + 1);
                    queue.push_back(w);
                }
            }
        }
        dist
    }

    fn brandes_dependencies(&self, s: usize) -> Vec<f64> {
        let n = self.len();
        let mut stack = Vec::with_capacity(n);
        let mut preds: Vec<Vec<usize>> = vec![Vec::new(); n];
        let mut sigma = vec![0.0f64; n];
        let mut dist = vec![usize::MAX; n];
        sigma[s] = 1.0;
        dist[s] = 0;
        let mut queue = VecDeque::from([s]);
        while let Some(v) = queue.pop_front() {
            stack.push(v);
            for &w in &self.adjacency[v] {
                if dist[w] == usize::MAX {
                    dist[w] = dist[v] + 1;
                    queue.push_back(w);
                }
                if dist[w] == dist[v] + 1 {
                    sigma[w] += sigma[v];
                    preds[w].push(v);
                }
            }
        }
        let mut delta = vec![0.0f64; n];
        while let Some(w) = stack.pop() {
            for &v in &preds[w] {
                delta[v] += sigma[v] / sigma[w] * (1.0 + delta[w]);
            }
        }
        delta[s] = 0.0;
        delta
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CentralityScores {
    pub degree: f64,
    pub closeness: f64,
    pub betweenness: f64,
    pub salience: f64,
}

/// Per-node centrality, in graph node order.
#[derive(Debug, Clone, PartialEq)]
pub struct CentralityTable {
    ids: Vec<NodeId>,
    rows: Vec<CentralityScores>,
    lookup: HashMap<NodeId, usize>,
}

impl CentralityTable {
    pub fn from_measures(
        ids: Vec<NodeId>,
        degree: &[f64],
        closeness: &[f64],
        betweenness: &[f64],
    ) -> Self {
        let rows: Vec<_> = (0..ids.len())
            .map(|i| CentralityScores {
                degree: degree[i],
                closeness: closeness[i],
                betweenness: betweenness[i],
                salience: (degree[i] + closeness[i] + betweenness[i]) / 3.0,
            })
            .collect();
        let lookup = ids.iter().cloned().enumerate().map(|(i, id)| (id, i)).collect();
        CentralityTable { ids, rows, lookup }
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn get(&self, id: &NodeId) -> Option<&CentralityScores> {
        self.lookup.get(id).map(|&i| &self.rows[i])
    }

    pub fn salience_of(&self, id: &NodeId) -> Option<f64> {
        self.get(id).map(|r| r.salience)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&NodeId, &CentralityScores)> {
        self.ids.iter().zip(&self.rows)
    }

    /// Salience quantile with linear interpolation between order statistics.
    /// `q = 0.5` is the median. Returns 0 for an empty table.
    pub fn salience_quantile(&self, q: f64) -> f64 {
        let mut values: Vec<f64> = self.rows.iter().map(|r| r.salience).collect();
        if values.is_empty() {
            return 0.0;
        }
        values.sort_by(f64::total_cmp);
        let pos = q.clamp(0.0, 1.0) * (values.len() - 1) as f64;
        let lo = pos.floor() as usize;
        let hi = pos.ceil() as usize;
        values[lo] + (values[hi] - values[lo]) * (pos - lo as f64)
    }

    pub fn median_salience(&self) -> f64 {
        self.salience_quantile(0.5)
    }

    /// Tab-separated export: header plus one row per node, 12 significant digits.
    pub fn write_tsv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        out.write_all(self.to_tsv().as_bytes())
    }

    pub fn to_tsv(&self) -> String {
        let mut s = String::from("node_id\tdegree\tcloseness\tbetweenness\tsalience\n");
        for (id, r) in self.iter() {
            let _ = writeln!(
                s,
                "{}\t{}\t{}\t{}\t{}",
                id,
                format_significant(r.degree, 12),
                format_significant(r.closeness, 12),
                format_significant(r.betweenness, 12),
                format_significant(r.salience, 12),
            );
        }
        s
    }
}

fn by_id(graph: &KnowledgeGraph, values: Vec<f64>) -> Vec<(NodeId, f64)> {
    graph.nodes().iter().map(|n| n.id.clone()).zip(values).collect()
}

pub fn degree_centrality(graph: &KnowledgeGraph) -> Vec<(NodeId, f64)> {
    by_id(graph, Projection::from_graph(graph).degree())
}

pub fn closeness_centrality(graph: &KnowledgeGraph) -> Vec<(NodeId, f64)> {
    by_id(graph, Projection::from_graph(graph).closeness())
}

pub fn betweenness_centrality(graph: &KnowledgeGraph) -> Vec<(NodeId, f64)> {
    by_id(graph, Projection::from_graph(graph).betweenness())
}

/// Compute all three measures and their mean for every node.
///
/// Prefer [`KnowledgeGraph::centrality`], which caches this result.
pub fn salience(graph: &KnowledgeGraph) -> CentralityTable {
    let p = Projection::from_graph(graph);
    let ids = graph.nodes().iter().map(|n| n.id.clone()).collect();
    CentralityTable::from_measures(ids, &p.degree(), &p.closeness(), &p.betweenness())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn path3() -> Projection {
        Projection::from_edges(3, [(0, 1), (1, 2)])
    }

    fn k3() -> Projection {
        Projection::from_edges(3, [(0, 1), (1, 2), (0, 2)])
    }

    #[test]
    fn degree_small_graphs() {
        assert_eq!(path3().degree(), vec![0.5, 1.0, 0.5]);
        assert_eq!(k3().degree(), vec![1.0; 3]);
        assert_eq!(Projection::from_edges(1, []).degree(), vec![0.0]);
        assert!(Projection::from_edges(0, []).degree().is_empty());
    }

    #[test]
    fn closeness_small_graphs() {
        let c = path3().closeness();
        assert_abs_diff_eq!(c[1], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(c[0], 2.0 / 3.0, epsilon = 1e-12);
        assert_eq!(k3().closeness(), vec![1.0; 3]);
        let two_edges = Projection::from_edges(4, [(0, 1), (2, 3)]).closeness();
        for v in two_edges {
            assert_abs_diff_eq!(v, 1.0 / 3.0, epsilon = 1e-12);
        }
        let isolated = Projection::from_edges(3, [(0, 1)]).closeness();
        assert_eq!(isolated[2], 0.0);
    }

    #[test]
    fn betweenness_small_graphs() {
        assert_eq!(path3().betweenness(), vec![0.0, 1.0, 0.0]);
        assert_eq!(k3().betweenness(), vec![0.0; 3]);
        let star = Projection::from_edges(5, [(0, 1), (0, 2), (0, 3), (0, 4)]).betweenness();
        assert_abs_diff_eq!(star[0], 1.0, epsilon = 1e-12);
        assert!(star[1..].iter().all(|&b| b == 0.0));
        assert_eq!(Projection::from_edges(2, [(0, 1)]).betweenness(), vec![0.0, 0.0]);
    }

    #[test]
    fn multi_edges_and_loops_are_ignored() {
        let p = Projection::from_edges(3, [(0, 1), (1, 0), (0, 1), (1, 1), (1, 2)]);
        assert_eq!(p.degree(), path3().degree());
        assert_eq!(p.betweenness(), path3().betweenness());
    }

    #[test]
    fn quantiles() {
        let ids: Vec<NodeId> = ["a", "b", "c", "d"].into_iter().map(NodeId::from).collect();
        let zeros = [0.0; 4];
        let t = CentralityTable::from_measures(ids, &[0.3, 0.0, 0.9, 0.6], &zeros, &zeros);
        assert_abs_diff_eq!(t.median_salience(), 0.15, epsilon = 1e-12);
        assert_abs_diff_eq!(t.salience_quantile(1.0), 0.3, epsilon = 1e-12);
        assert_abs_diff_eq!(t.salience_quantile(0.0), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn tsv_export_columns() {
        let ids: Vec<NodeId> = ["a", "b", "c"].into_iter().map(NodeId::from).collect();
        let p = path3();
        let t = CentralityTable::from_measures(ids, &p.degree(), &p.closeness(), &p.betweenness());
        let tsv = t.to_tsv();
        let lines: Vec<_> = tsv.lines().collect();
        assert_eq!(lines[0], "node_id\tdegree\tcloseness\tbetweenness\tsalience");
        assert_eq!(lines[2], "b\t1\t1\t1\t1");
        assert_eq!(lines[1], "a\t0.5\t0.666666666667\t0\t0.388888888889");
    }
}
