//! Rank the nodes of the coltan fixture by salience and show the traversal
//! budget each one would get as a seed.
//!
//! cargo run --example centrality

use std::path::Path;

use chainsight::config::AppConfig;
use chainsight::traversal::hop_budget;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let config = AppConfig::from_file(&Path::new(env!("CARGO_MANIFEST_DIR")).join("data/chainsight.toml"))?;
    let graph = config.load_graph()?;
    let table = graph.centrality();

    let mut rows: Vec<_> = table.iter().collect();
    rows.sort_by(|a, b| b.1.salience.total_cmp(&a.1.salience).then(a.0.cmp(b.0)));
    println!("median salience {:.4}", table.median_salience());
    println!("{:<22} {:>7} {:>9} {:>11} {:>8} {:>5}", "node", "degree", "closeness", "betweenness", "salience", "hops");
    for (id, s) in rows {
        let hops = hop_budget(s.salience, table, &config.traversal);
        println!(
            "{:<22} {:>7.4} {:>9.4} {:>11.4} {:>8.4} {:>5}",
            id.as_str(),
            s.degree,
            s.closeness,
            s.betweenness,
            s.salience,
            hops
        );
    }
    Ok(())
}
