//! Wrap factor rows in context shells, index them and look securities up
//! by a natural-language query.
//!
//! cargo run --example factor_shells -- "Apple factor exposures"

use std::path::Path;

use chainsight::config::AppConfig;
use chainsight::vecstore::VectorIndex;
use chainsight::verbalizer::{render_factor_shell, Modality};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let query = std::env::args().nth(1).unwrap_or_else(|| "Apple factor exposures".to_string());
    let config = AppConfig::from_file(&Path::new(env!("CARGO_MANIFEST_DIR")).join("data/chainsight.toml"))?;
    let catalog = config.load_catalog()?;
    let shells = config
        .load_factors()?
        .iter()
        .map(|r| render_factor_shell(r, &catalog))
        .collect::<Result<Vec<_>, _>>()?;
    println!("{}\n", shells[0].text);

    let embedder = config.embedder();
    let index = VectorIndex::build(shells, &embedder, Modality::Factor)?;
    println!("query: {query}");
    for hit in index.search(&embedder, &query, 3, None)? {
        println!("  {:.4}  {}", hit.score, hit.shell.meta("security").unwrap_or("?"));
    }
    Ok(())
}
