//! Tokenizes a text file, builds a vocabulary and shows the round trip.
//!
//! cargo run --example tokenize_vocab -- data/fixtures/overfit_1k.txt

use newsgen::corpus::{build_vocab, detokenize, tokenize, words_cased, Article, CorpusStore};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let path = std::env::args().nth(1).unwrap_or_else(|| "data/fixtures/overfit_1k.txt".into());
    let text = std::fs::read_to_string(&path)?;

    let cased = words_cased(&text);
    println!("{} tokens; first 12: {:?}", cased.len(), &cased[..cased.len().min(12)]);

    let mut store = CorpusStore::new();
    store.insert(Article::new("doc", "", text.clone()))?;
    let vocab = build_vocab(&store, 1, 20_000)?;
    println!("vocabulary of {} ids; most frequent words: {:?}", vocab.len(), &vocab.words()[..vocab.words().len().min(8)]);

    let (ids, freq) = tokenize(&text, Some(&vocab));
    let top = freq.iter().max_by_key(|(_, &c)| c).map(|(w, c)| format!("{w:?} x{c}")).unwrap_or_default();
    println!("{} ids, commonest token {top}", ids.len());

    let back = detokenize(&ids.ids, &vocab);
    let head: String = back.chars().take(160).collect();
    println!("detokenized: {head}...");
    assert_eq!(tokenize(&back, Some(&vocab)).0, ids);
    println!("re-tokenizing the detokenized text gives the same ids");
    Ok(())
}
