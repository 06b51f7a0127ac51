//! Seeded generators for test and benchmark fixtures.
//!
//! Supply-chain graphs grow by preferential attachment: each new product
//! picks inputs, raw materials and locations with probability proportional
//! to their current degree + 1, which yields the heavy-tailed hubs seen in
//! real supply networks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::kg::{Edge, EdgeKind, KnowledgeGraph, MetaKey, MetaValue, Node, NodeKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SupplyChainShape {
    pub companies: usize,
    pub products: usize,
    pub inputs: usize,
    pub raw_materials: usize,
    pub industries: usize,
    pub locations: usize,
}

impl Default for SupplyChainShape {
    /// 50 nodes.
    fn default() -> Self {
        SupplyChainShape {
            companies: 8,
            products: 14,
            inputs: 10,
            raw_materials: 6,
            industries: 4,
            locations: 8,
        }
    }
}

impl SupplyChainShape {
    pub fn node_count(&self) -> usize {
        self.companies + self.products + self.inputs + self.raw_materials + self.industries + self.locations
    }

    /// Scale every tier by `factor` (each tier keeps at least one node).
    pub fn scaled(&self, factor: usize) -> Self {
        let s = |n: usize| (n * factor).max(1);
        SupplyChainShape {
            companies: s(self.companies),
            products: s(self.products),
            inputs: s(self.inputs),
            raw_materials: s(self.raw_materials),
            industries: s(self.industries),
            locations: s(self.locations),
        }
    }
}

/// Degree-proportional sampler over a fixed pool of node indices.
struct Pool {
    ids: Vec<usize>,
    weight: Vec<u64>,
}

impl Pool {
    fn new(ids: impl IntoIterator<Item = usize>) -> Self {
        let ids: Vec<usize> = ids.into_iter().collect();
        let weight = vec![1; ids.len()];
        Pool { ids, weight }
    }

    /// Draw `k` distinct members, weights bumped as they are chosen.
    fn draw(&mut self, rng: &mut ChaCha8Rng, k: usize) -> Vec<usize> {
        let mut chosen: Vec<usize> = Vec::new();
        for _ in 0..k.min(self.ids.len()) {
            let total: u64 = (0..self.ids.len())
                .filter(|i| !chosen.contains(i))
                .map(|i| self.weight[i])
                .sum();
            let mut ticket = rng.random_range(0..total);
            let pick = (0..self.ids.len())
                .filter(|i| !chosen.contains(i))
                .find(|&i| {
                    if ticket < self.weight[i] {
                        true
                    } else {
                        ticket -= self.weight[i];
                        false
                    }
                })
                .expect("ticket within total");
            chosen.push(pick);
        }
        for &i in &chosen {
            self.weight[i] += 1;
        }
        chosen.into_iter().map(|i| self.ids[i]).collect()
    }
}

fn pct(rng: &mut ChaCha8Rng, lo: u32, hi: u32) -> f64 {
    f64::from(rng.random_range(lo..=hi))
}

/// Schema-conformant supply-chain graph grown by preferential attachment.
///
/// Companies only produce `Product` or `InputProduct` nodes, so a company's
/// one-hop neighborhood never contains raw materials, locations or
/// industries. Every product is produced by at least one company.
pub fn supply_chain(shape: SupplyChainShape, seed: u64) -> KnowledgeGraph {
    assert!(
        shape.companies > 0 && shape.products > 0 && shape.inputs > 0 && shape.locations > 0,
        "companies, products, inputs and locations must be non-empty"
    );
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut nodes: Vec<Node> = Vec::with_capacity(shape.node_count());
    let mut tier = |kind: NodeKind, prefix: &str, label: &str, count: usize, rng: &mut ChaCha8Rng| {
        let start = nodes.len();
        for i in 0..count {
            let mut n = Node::new(format!("{prefix}{i}"), kind, format!("{label} {i}"));
            n = match kind {
                NodeKind::Company => n
                    .with_meta(MetaKey::Ticker, MetaValue::Text(format!("T{i:03}")))
                    .with_meta(MetaKey::TotalRevenue, MetaValue::Number(f64::from(rng.random_range(1..500u32)) * 1e8)),
                NodeKind::Product => n
                    .with_meta(MetaKey::HsCode, MetaValue::Text(format!("{:04}", rng.random_range(1000..9999u32))))
                    .with_meta(MetaKey::TotalRevenueShare, MetaValue::Number(pct(rng, 1, 60))),
                NodeKind::InputProduct | NodeKind::InputToInputProduct => n
                    .with_meta(MetaKey::HsCode, MetaValue::Text(format!("{:04}", rng.random_range(1000..9999u32))))
                    .with_meta(MetaKey::ProductionCostPercentage, MetaValue::Number(pct(rng, 1, 40))),
                NodeKind::Industry => {
                    n.with_meta(MetaKey::NaicsCode, MetaValue::Text(format!("{}", rng.random_range(311_000..339_999u32))))
                }
                NodeKind::Location => n
                    .with_meta(MetaKey::Longitude, MetaValue::Number(f64::from(rng.random_range(-179..=179i32))))
                    .with_meta(MetaKey::Latitude, MetaValue::Number(f64::from(rng.random_range(-89..=89i32))))
                    .with_meta(MetaKey::ProductionShare, MetaValue::Number(pct(rng, 1, 80))),
            };
            nodes.push(n);
        }
        start..start + count
    };
    let companies = tier(NodeKind::Company, "c", "Company", shape.companies, &mut rng);
    let products = tier(NodeKind::Product, "p", "Product", shape.products, &mut rng);
    let inputs = tier(NodeKind::InputProduct, "i", "Input", shape.inputs, &mut rng);
    let raws = tier(NodeKind::InputToInputProduct, "r", "Material", shape.raw_materials, &mut rng);
    let industries = tier(NodeKind::Industry, "d", "Industry", shape.industries, &mut rng);
    let locations = tier(NodeKind::Location, "l", "Location", shape.locations, &mut rng);

    let id = |i: usize| nodes[i].id.as_str().to_string();
    let mut edges: Vec<Edge> = Vec::new();
    let mut producers = Pool::new(companies.clone());
    let mut input_pool = Pool::new(inputs.clone());
    let mut raw_pool = Pool::new(raws.clone());
    let mut location_pool = Pool::new(locations.clone());
    let mut industry_pool = Pool::new(industries.clone());

    for (n, p) in products.clone().enumerate() {
        // First pass guarantees every company produces something.
        let maker = if n < shape.companies {
            companies.start + n
        } else {
            producers.draw(&mut rng, 1)[0]
        };
        edges.push(Edge::new(id(maker), id(p), EdgeKind::Produces).weighted(pct(&mut rng, 1, 60)));
        let k = rng.random_range(1..=3usize);
        for i in input_pool.draw(&mut rng, k) {
            edges.push(Edge::new(id(p), id(i), EdgeKind::HasInput).weighted(pct(&mut rng, 1, 40)));
        }
        for l in location_pool.draw(&mut rng, 1) {
            edges.push(Edge::new(id(p), id(l), EdgeKind::ManufacturedIn).weighted(pct(&mut rng, 5, 90)));
        }
        if !industries.is_empty() {
            for d in industry_pool.draw(&mut rng, 1) {
                edges.push(Edge::new(id(p), id(d), EdgeKind::BelongsTo));
            }
        }
    }
    for i in inputs.clone() {
        if !raws.is_empty() {
            let k = rng.random_range(1..=2usize);
            for r in raw_pool.draw(&mut rng, k) {
                edges.push(Edge::new(id(i), id(r), EdgeKind::MadeWith).weighted(pct(&mut rng, 1, 50)));
            }
        }
        for l in location_pool.draw(&mut rng, 1) {
            edges.push(Edge::new(id(i), id(l), EdgeKind::ManufacturedIn).weighted(pct(&mut rng, 5, 90)));
        }
        // Some manufacturers also sell components.
        if rng.random_bool(0.3) {
            let maker = producers.draw(&mut rng, 1)[0];
            edges.push(Edge::new(id(maker), id(i), EdgeKind::Produces).weighted(pct(&mut rng, 1, 20)));
        }
    }
    for r in raws {
        for l in location_pool.draw(&mut rng, 1) {
            edges.push(Edge::new(id(r), id(l), EdgeKind::SourcedFrom).weighted(pct(&mut rng, 5, 90)));
        }
    }
    KnowledgeGraph::from_parts(nodes, edges).expect("generator emits schema-conformant graphs")
}

/// Random connected simple undirected graph on `n` vertices as an edge
/// list: a random spanning tree plus each remaining pair with probability
/// `density`.
pub fn connected_graph(n: usize, density: f64, seed: u64) -> Vec<(usize, usize)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut edges = Vec::new();
    for v in 1..n {
        edges.push((rng.random_range(0..v), v));
    }
    for a in 0..n {
        for b in a + 1..n {
            let in_tree = edges.iter().any(|&(x, y)| (x, y) == (a, b) || (x, y) == (b, a));
            if !in_tree && rng.random_bool(density.clamp(0.0, 1.0)) {
                edges.push((a, b));
            }
        }
    }
    edges
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_shape_is_fifty_nodes_and_valid() {
        let g = supply_chain(SupplyChainShape::default(), 7);
        assert_eq!(g.node_count(), 50);
        assert!(g.validate().is_empty());
    }

    #[test]
    fn deterministic_per_seed() {
        let a = supply_chain(SupplyChainShape::default(), 3).to_document();
        let b = supply_chain(SupplyChainShape::default(), 3).to_document();
        let c = supply_chain(SupplyChainShape::default(), 4).to_document();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn connected_graph_is_connected() {
        for seed in 0..20 {
            let edges = connected_graph(12, 0.1, seed);
            let mut seen = vec![false; 12];
            let mut stack = vec![0];
            seen[0] = true;
            while let Some(v) = stack.pop() {
                for &(a, b) in &edges {
                    for (x, y) in [(a, b), (b, a)] {
                        if x == v && !seen[y] {
                            seen[y] = true;
                            stack.push(y);
                        }
                    }
                }
            }
            assert!(seen.iter().all(|&s| s));
        }
    }
}
