//! A question that spans two topics, answered from one merged index and
//! from one index per modality.
//!
//! cargo run --example compound_query

use std::path::Path;

use chainsight::vecstore::{
    load_factor_table, load_news_corpus, news_shells, search_merged, HashingEmbedder, SearchHit, VectorIndex, PAGE_WORDS,
};
use chainsight::verbalizer::{render_factor_shell, FactorCatalog, Modality};

fn show(label: &str, hits: &[SearchHit]) {
    println!("{label}");
    for h in hits {
        let what = h.shell.meta("ticker").or(h.shell.meta("outlet")).unwrap_or("?");
        println!("  {:.4}  {:<7} {what}", h.score, h.shell.source.to_string());
    }
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("data/compound");
    let query = "equity beta exposure and cobalt supply";
    let embedder = HashingEmbedder::default();

    let shells = load_factor_table(std::fs::File::open(dir.join("factors.csv"))?)?
        .iter()
        .map(|r| render_factor_shell(r, &FactorCatalog::builtin()))
        .collect::<Result<Vec<_>, _>>()?;
    let factors = VectorIndex::build(shells, &embedder, Modality::Factor)?;
    let corpus = load_news_corpus(std::io::BufReader::new(std::fs::File::open(dir.join("news.jsonl"))?))?;
    let news = VectorIndex::build(news_shells(&corpus, PAGE_WORDS), &embedder, Modality::News)?;

    println!("query: {query}\n");
    show("one merged index, k=4:", &search_merged(&[&factors, &news], &embedder, query, 4)?);
    show("factor index, k=2:", &factors.search(&embedder, query, 2, None)?);
    show("news index, k=2:", &news.search(&embedder, query, 2, None)?);
    Ok(())
}
