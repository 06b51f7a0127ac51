//! Resolve a mention to seed nodes, expand by salience-adaptive hops and
//! print the ranked paths as sentences.
//!
//! cargo run --example traverse -- coltan

use std::path::Path;

use chainsight::config::AppConfig;
use chainsight::traversal::{build_node_index, extract_paths, resolve_seeds, traverse};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mentions: Vec<String> = std::env::args().skip(1).collect();
    let mentions = if mentions.is_empty() { vec!["coltan".to_string()] } else { mentions };

    let config = AppConfig::from_file(&Path::new(env!("CARGO_MANIFEST_DIR")).join("data/chainsight.toml"))?;
    let graph = config.load_graph()?;
    let phrases = config.load_phrases()?;
    let embedder = config.embedder();
    let index = build_node_index(&graph, &embedder)?;

    let seeds = resolve_seeds(&mentions, &index, &embedder, &graph, &config.traversal)?;
    let sub = traverse(&graph, &seeds, graph.centrality(), &config.traversal)?;
    for s in &sub.seeds {
        println!("seed {} (salience {:.4}, {} hops)", s.node, s.salience, s.budget);
    }
    println!("{} nodes, {} edges in the subgraph\n", sub.nodes.len(), sub.edges.len());
    for (rank, path) in extract_paths(&sub, &config.traversal).iter().enumerate() {
        let shell = phrases.verbalize_path(path, &graph)?;
        println!("{:>2}. [{:.5}] {}", rank + 1, path.score, shell.text);
    }
    Ok(())
}
