//! Trains a small LSTM language model on a plain text file and saves a
//! checkpoint directory.
//!
//! cargo run --release --example train_model -- data/fixtures/overfit_1k.txt /tmp/ckpt 2000

use std::path::PathBuf;

use newsgen::corpus::{build_vocab, Article, CorpusStore};
use newsgen::lm::{save_checkpoint, train, LanguageModel, LmConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let text_path = PathBuf::from(args.next().unwrap_or_else(|| "data/fixtures/overfit_1k.txt".into()));
    let out = PathBuf::from(args.next().unwrap_or_else(|| "target/example-checkpoint".into()));
    let steps: u64 = args.next().map(|s| s.parse()).transpose()?.unwrap_or(2000);

    let mut store = CorpusStore::new();
    store.insert(Article::new("text", "", std::fs::read_to_string(&text_path)?))?;
    let vocab = build_vocab(&store, 1, 5000)?;
    let ids = store.encode(&vocab, ["text"]);

    let mut model = LanguageModel::<f32>::new(LmConfig {
        vocab_size: vocab.len(),
        embed_dim: 32,
        layers: 2,
        units: 32,
        seq_len: 16,
        batch_size: 4,
        learning_rate: 0.5,
        seed: 1,
        ..LmConfig::default()
    })?;
    let log = train(&mut model, &ids, steps, |r| {
        if r.step % 250 == 0 {
            println!("step {:>5}  loss {:.4}", r.step, r.loss);
        }
    })?;
    save_checkpoint(&model, &vocab, &out)?;
    println!(
        "{} tokens, {} words, final loss {:.4}, saved to {}",
        ids.len(),
        vocab.len(),
        log.losses().last().copied().unwrap_or(f64::NAN),
        out.display()
    );
    Ok(())
}
