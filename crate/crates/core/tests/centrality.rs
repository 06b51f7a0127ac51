mod common;

use chainsight::centrality::{salience, Projection};
use chainsight::kg::{Edge, EdgeKind, KnowledgeGraph, Node, NodeKind};
use chainsight::synthetic::{connected_graph, supply_chain, SupplyChainShape};
use common::centrality_oracle;
use proptest::prelude::*;

const TOL: f64 = 1e-9;

fn close(a: &[f64], b: &[f64]) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= TOL)
}

/// Arbitrary simple or multi-edge graph with loops, possibly disconnected.
fn any_graph() -> impl Strategy<Value = (usize, Vec<(usize, usize)>)> {
    (1usize..24).prop_flat_map(|n| (Just(n), prop::collection::vec((0..n, 0..n), 0..n * 3)))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn projection_matches_oracle((n, edges) in any_graph()) {
        let p = Projection::from_edges(n, edges.iter().copied());
        let o = centrality_oracle(n, &edges);
        prop_assert!(close(&p.degree(), &o.degree));
        prop_assert!(close(&p.closeness(), &o.closeness));
        prop_assert!(close(&p.betweenness(), &o.betweenness));
    }

    #[test]
    fn measures_are_unit_bounded((n, edges) in any_graph()) {
        let p = Projection::from_edges(n, edges);
        for v in p.degree().into_iter().chain(p.closeness()).chain(p.betweenness()) {
            prop_assert!((0.0..=1.0 + TOL).contains(&v));
        }
    }

    #[test]
    fn relabelling_permutes_scores(seed in 0u64..500, rot in 1usize..10) {
        let n = 12;
        let edges = connected_graph(n, 0.2, seed);
        let moved: Vec<_> = edges.iter().map(|&(a, b)| ((a + rot) % n, (b + rot) % n)).collect();
        let a = Projection::from_edges(n, edges).betweenness();
        let b = Projection::from_edges(n, moved).betweenness();
        for v in 0..n {
            prop_assert!((a[v] - b[(v + rot) % n]).abs() <= TOL);
        }
    }
}

#[test]
fn knowledge_graph_uses_undirected_projection() {
    // Edge direction must not matter: a company with two products and a
    // product sold back by the company yield the same projection.
    let nodes = vec![
        Node::new("c", NodeKind::Company, "C"),
        Node::new("p", NodeKind::Product, "P"),
        Node::new("q", NodeKind::Product, "Q"),
    ];
    let edges = vec![
        Edge::new("c", "p", EdgeKind::Produces),
        Edge::new("q", "c", EdgeKind::SoldBy),
        Edge::new("p", "c", EdgeKind::SoldBy),
    ];
    let g = KnowledgeGraph::from_parts(nodes, edges).unwrap();
    let table = salience(&g);
    let o = centrality_oracle(3, &[(0, 1), (0, 2)]);
    for (i, n) in g.nodes().iter().enumerate() {
        assert!((table.salience_of(&n.id).unwrap() - o.salience[i]).abs() <= TOL);
    }
}

#[test]
fn supply_chain_fixture_matches_oracle() {
    let g = supply_chain(SupplyChainShape::default(), 11);
    let pos = |id| g.node_index(id).unwrap();
    let edges: Vec<_> = g.edges().iter().map(|e| (pos(&e.src), pos(&e.dst))).collect();
    let o = centrality_oracle(g.node_count(), &edges);
    let table = g.centrality();
    for (i, n) in g.nodes().iter().enumerate() {
        let s = table.get(&n.id).unwrap();
        assert!((s.degree - o.degree[i]).abs() <= TOL);
        assert!((s.closeness - o.closeness[i]).abs() <= TOL);
        assert!((s.betweenness - o.betweenness[i]).abs() <= TOL);
        assert!((s.salience - o.salience[i]).abs() <= TOL);
    }
}

#[test]
fn tsv_export_parses_back() {
    let g = common::graph("coltan_graph.jsonl");
    let tsv = g.centrality().to_tsv();
    let mut lines = tsv.lines();
    assert_eq!(lines.next(), Some("node_id\tdegree\tcloseness\tbetweenness\tsalience"));
    let mut rows = 0;
    for (line, n) in lines.zip(g.nodes()) {
        let cols: Vec<&str> = line.split('\t').collect();
        assert_eq!(cols[0], n.id.as_str());
        let s = g.centrality().get(&n.id).unwrap();
        let parsed: Vec<f64> = cols[1..].iter().map(|c| c.parse().unwrap()).collect();
        for (p, v) in parsed.iter().zip([s.degree, s.closeness, s.betweenness, s.salience]) {
            assert!((p - v).abs() <= 1e-11 * v.abs().max(1.0));
        }
        rows += 1;
    }
    assert_eq!(rows, g.node_count());
}
