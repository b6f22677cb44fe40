//! Loads a checkpoint and decodes from it by sampling and by beam search.
//!
//! cargo run --release --example train_model
//! cargo run --release --example generate_text -- target/example-checkpoint

use std::path::PathBuf;

use newsgen::decoder::{DecodeMode, DecodeParams, Generator};
use newsgen::lm::load_checkpoint;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "target/example-checkpoint".into()));
    let ckpt = load_checkpoint(&dir)?;
    let generator = Generator {
        model: &ckpt.model,
        vocab: &ckpt.vocab,
        topic: "Example".into(),
        checkpoint: dir.display().to_string(),
    };

    for temperature in [0.5, 1.0] {
        let params = DecodeParams {
            temperature,
            max_tokens: 40,
            seed: 7,
            ..DecodeParams::default()
        };
        let s = generator.sample(&params, &[])?;
        println!("sample T={temperature}  logprob {:>8.2}  {}", s.logprob, s.text);
    }

    let params = DecodeParams {
        mode: DecodeMode::Beam,
        beam_width: 4,
        max_tokens: 40,
        ..DecodeParams::default()
    };
    let b = generator.beam(&params, &[])?;
    println!("beam width 4     logprob {:>8.2}  {}", b.logprob, b.text);

    let pool = generator.generate_pool(&DecodeParams { max_tokens: 30, ..DecodeParams::default() }, 3)?;
    for s in &pool {
        println!("pool {}: {}", s.id, s.text);
    }
    Ok(())
}
