//! Generate a scale-free supply-chain graph and watch the neighbourhood of
//! each company grow with the hop count.
//!
//! cargo run --example synthetic_graph -- 4

use chainsight::kg::NodeKind;
use chainsight::synthetic::{supply_chain, SupplyChainShape};
use chainsight::traversal::{traverse, SeedMatch, TraversalConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let scale: usize = std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or(4);
    let graph = supply_chain(SupplyChainShape::default().scaled(scale), 2024);
    println!("{} nodes, {} edges, {} schema issues", graph.node_count(), graph.edge_count(), graph.validate().len());

    let companies: Vec<_> = graph.nodes().iter().filter(|n| n.kind == NodeKind::Company).take(5).collect();
    println!("{:<8} {:>6} {:>6} {:>6}", "company", "1 hop", "2 hops", "3 hops");
    for c in companies {
        let seed = SeedMatch { mention: c.name.clone(), node: c.id.clone(), similarity: 1.0 };
        let reach = |h: usize| -> Result<usize, Box<dyn std::error::Error>> {
            let config = TraversalConfig { fixed_hops: Some(h), ..TraversalConfig::default() };
            Ok(traverse(&graph, std::slice::from_ref(&seed), graph.centrality(), &config)?.nodes.len())
        };
        println!("{:<8} {:>6} {:>6} {:>6}", c.id.as_str(), reach(1)?, reach(2)?, reach(3)?);
    }
    Ok(())
}
