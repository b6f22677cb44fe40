//! Judges a few hand-written "generated" sentences against the toy corpus.
//!
//! cargo run --release --example novelty_filter

use newsgen::corpus::{ingest, InputFormat};
use newsgen::novelty::{filter_sentences, CorpusIndex, Origin, ScanMode, Sentence, DEFAULT_THRESHOLD};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let (store, _) = ingest("data/toy/corpus.jsonl".as_ref(), InputFormat::Jsonl)?;
    let index = CorpusIndex::build(&store);
    println!("{} distinct corpus sentences", index.len());

    let candidates = [
        // copied from the corpus
        "Analysts in Seoul said the launch was meant to send a message to Washington.",
        // a light edit of the same sentence
        "Analysts in Seoul said the launch was meant to send a signal to Washington.",
        "The fishing fleet returned early after a storm closed the northern harbour.",
    ];
    let sentences: Vec<Sentence> = candidates
        .iter()
        .enumerate()
        .map(|(i, t)| Sentence {
            text: t.to_string(),
            origin: Origin::Generated,
            parent_id: "demo".into(),
            index: i,
            ends_paragraph: false,
        })
        .collect();

    let out = filter_sentences(&sentences, &index, DEFAULT_THRESHOLD, ScanMode::Exact)?;
    for r in &out.reports {
        println!(
            "{:?}  {:.3} dissimilar to {}\n    {}",
            r.verdict,
            r.dissimilarity,
            r.closest_source.as_deref().unwrap_or("-"),
            r.sentence.text
        );
    }
    let s = out.summary();
    println!("kept {} rejected {}", s.kept, s.rejected);
    Ok(())
}
