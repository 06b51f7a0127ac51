//! Chunk the news corpus into pages and search it, with and without a
//! recency filter.
//!
//! cargo run --example news_search -- "coltan DRC" 2025-03-05T00:00:00Z

use std::path::Path;

use chainsight::config::AppConfig;
use chainsight::vecstore::{news_shells, SearchFilter, VectorIndex, PAGE_WORDS};
use chainsight::verbalizer::Modality;
use chrono::DateTime;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let query = args.next().unwrap_or_else(|| "coltan DRC".to_string());
    let since = args.next();

    let config = AppConfig::from_file(&Path::new(env!("CARGO_MANIFEST_DIR")).join("data/chainsight.toml"))?;
    let embedder = config.embedder();
    let index = VectorIndex::build(news_shells(&config.load_news()?, PAGE_WORDS), &embedder, Modality::News)?;
    println!("{} pages indexed", index.len());

    let filter = since.map(|s| DateTime::parse_from_rfc3339(&s).map(SearchFilter::since)).transpose()?;
    for hit in index.search(&embedder, &query, 3, filter.as_ref())? {
        let m = |k| hit.shell.meta(k).unwrap_or("-");
        println!("{:.4}  page {}  {}  {}", hit.score, m("page"), m("timestamp"), m("outlet"));
    }
    Ok(())
}
