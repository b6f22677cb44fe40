//! Tags a JSONL corpus by TF-IDF and splits it into the keyword topics.
//!
//! cargo run --example tag_topics -- data/toy/corpus.jsonl

use std::path::PathBuf;

use newsgen::corpus::{ingest, InputFormat};
use newsgen::tagger::{build_subsets, default_topics, tag_store, Idf, DEFAULT_K};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let path = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "data/toy/corpus.jsonl".into()));
    let (mut store, stats) = ingest(&path, InputFormat::Jsonl)?;
    println!("{} articles, {} words", stats.article_count, stats.word_count);

    let idf = Idf::build(&store);
    let sets = tag_store(&mut store, &idf, DEFAULT_K)?;
    for set in sets.iter().take(3) {
        let tags: Vec<String> = set.tags.iter().take(6).map(|t| format!("{} {:.2}", t.tag, t.score)).collect();
        println!("{}: {}", set.article_id, tags.join(", "));
    }

    for (subset, stats) in build_subsets(&mut store, &default_topics())? {
        println!("{:<26} {:>3} articles {:>6} words", subset.topic, stats.article_count, stats.word_count);
    }
    Ok(())
}
