mod common;

use std::collections::BTreeSet;

use chainsight::kg::{KnowledgeGraph, NodeId};
use chainsight::synthetic::{supply_chain, SupplyChainShape};
use chainsight::traversal::{extract_paths, traverse, Ranking, SeedMatch, TraversalConfig};
use common::{maximal_paths_oracle, path_key, PathKey};
use proptest::prelude::*;

fn seed(id: &str) -> SeedMatch {
    SeedMatch {
        mention: id.into(),
        node: NodeId::new(id),
        similarity: 1.0,
    }
}

fn small_shape() -> SupplyChainShape {
    SupplyChainShape {
        companies: 3,
        products: 5,
        inputs: 4,
        raw_materials: 3,
        industries: 2,
        locations: 3,
    }
}

fn all_paths(hops: usize) -> TraversalConfig {
    TraversalConfig {
        fixed_hops: Some(hops),
        max_hops: hops.max(3),
        max_paths: None,
        ..TraversalConfig::default()
    }
}

fn node_set(g: &KnowledgeGraph, seeds: &[SeedMatch], config: &TraversalConfig) -> BTreeSet<String> {
    traverse(g, seeds, g.centrality(), config)
        .unwrap()
        .nodes
        .iter()
        .map(|n| n.node.id.to_string())
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn extract_paths_equals_exhaustive_enumeration(gseed in 0u64..10_000, pick in 0usize..20, hops in 1usize..=4) {
        let g = supply_chain(small_shape(), gseed);
        prop_assert!(g.node_count() <= 20);
        let start = g.nodes()[pick % g.node_count()].id.to_string();
        let sub = traverse(&g, &[seed(&start)], g.centrality(), &all_paths(hops)).unwrap();
        prop_assert!(sub.nodes.len() <= 20);
        let mut got: Vec<PathKey> = extract_paths(&sub, &all_paths(hops)).iter().map(path_key).collect();
        got.sort();
        prop_assert_eq!(got, maximal_paths_oracle(&sub));
    }

    #[test]
    fn scores_are_weight_products_and_ranked(gseed in 0u64..10_000) {
        let g = supply_chain(small_shape(), gseed);
        let config = all_paths(3);
        let sub = traverse(&g, &[seed("c0")], g.centrality(), &config).unwrap();
        let paths = extract_paths(&sub, &config);
        for p in &paths {
            let product: f64 = p.edges.iter().map(|e| e.weight_percent.map_or(1.0, |w| w / 100.0)).product();
            prop_assert!((p.score - product).abs() <= 1e-15);
            prop_assert!(p.verify(&g).is_ok());
        }
        prop_assert!(paths.windows(2).all(|w| w[0].score >= w[1].score));
    }

    #[test]
    fn top_k_is_a_prefix_of_the_full_ranking(gseed in 0u64..10_000, k in 1usize..8) {
        let g = supply_chain(small_shape(), gseed);
        let full = all_paths(2);
        let sub = traverse(&g, &[seed("c1")], g.centrality(), &full).unwrap();
        let all = extract_paths(&sub, &full);
        let top = extract_paths(&sub, &TraversalConfig { max_paths: Some(k), ..full });
        prop_assert_eq!(&top[..], &all[..k.min(all.len())]);
    }

    #[test]
    fn raising_max_hops_never_drops_nodes(gseed in 0u64..10_000, pick in 0usize..50) {
        let g = supply_chain(SupplyChainShape::default(), gseed);
        let start = g.nodes()[pick % g.node_count()].id.to_string();
        let seeds = [seed(&start)];
        let mut previous = BTreeSet::new();
        for max_hops in 2..=5 {
            let config = TraversalConfig { max_hops, peripheral_hops: 2, ..TraversalConfig::default() };
            let nodes = node_set(&g, &seeds, &config);
            prop_assert!(nodes.is_superset(&previous));
            previous = nodes;
        }
        let mut previous = BTreeSet::new();
        for hops in 1..=4 {
            let nodes = node_set(&g, &seeds, &all_paths(hops));
            prop_assert!(nodes.is_superset(&previous));
            previous = nodes;
        }
    }

    #[test]
    fn subgraph_hops_are_bfs_distances(gseed in 0u64..10_000) {
        let g = supply_chain(SupplyChainShape::default(), gseed);
        let sub = traverse(&g, &[seed("p0")], g.centrality(), &all_paths(3)).unwrap();
        // Undirected distances from p0 by repeated relaxation.
        let n = g.node_count();
        let mut dist = vec![usize::MAX; n];
        dist[g.node_index(&NodeId::new("p0")).unwrap()] = 0;
        for _ in 0..n {
            for e in g.edges() {
                let (a, b) = (g.node_index(&e.src).unwrap(), g.node_index(&e.dst).unwrap());
                let (da, db) = (dist[a], dist[b]);
                if da != usize::MAX && da + 1 < db { dist[b] = da + 1; }
                if db != usize::MAX && db + 1 < dist[a] { dist[a] = db + 1; }
            }
        }
        let expected: BTreeSet<(String, usize)> = g.nodes().iter().enumerate()
            .filter(|(i, _)| dist[*i] <= 3)
            .map(|(i, n)| (n.id.to_string(), dist[i]))
            .collect();
        let got: BTreeSet<(String, usize)> = sub.nodes.iter().map(|n| (n.node.id.to_string(), n.hops)).collect();
        prop_assert_eq!(got, expected);
    }
}

#[test]
fn two_hops_reach_more_than_one_on_scale_free_fixture() {
    let g = supply_chain(SupplyChainShape::default().scaled(4), 2024);
    for c in g.nodes().iter().filter(|n| n.kind == chainsight::kg::NodeKind::Company) {
        let seeds = [seed(c.id.as_str())];
        let one = node_set(&g, &seeds, &all_paths(1)).len();
        let two = node_set(&g, &seeds, &all_paths(2)).len();
        assert!(two > one, "{}: {one} vs {two}", c.id);
    }
}

#[test]
fn hub_and_peripheral_budgets_on_coltan_graph() {
    let g = common::graph("coltan_graph.jsonl");
    let table = g.centrality();
    let median = table.median_salience();
    let config = TraversalConfig::default();
    for n in g.nodes() {
        let sub = traverse(&g, &[seed(n.id.as_str())], table, &config).unwrap();
        let expected = if table.salience_of(&n.id).unwrap() >= median { 1 } else { 2 };
        assert_eq!(sub.seeds[0].budget, expected, "{}", n.id);
        assert!(sub.nodes.iter().all(|s| s.hops <= expected));
    }
}

#[test]
fn salience_ranking_orders_by_mean_node_salience() {
    let g = common::graph("coltan_graph.jsonl");
    let config = TraversalConfig { ranking: Ranking::SalienceSum, ..all_paths(2) };
    let sub = traverse(&g, &[seed("coltan")], g.centrality(), &config).unwrap();
    let paths = extract_paths(&sub, &config);
    assert!(!paths.is_empty());
    for p in &paths {
        let mean = p.nodes.iter().map(|id| g.centrality().salience_of(id).unwrap()).sum::<f64>() / p.nodes.len() as f64;
        assert!((p.score - mean).abs() <= 1e-12);
    }
    assert!(paths.windows(2).all(|w| w[0].score >= w[1].score));
}
