//! Validates an article manifest against its sentence pool and prints the
//! assembled article, then shows a rejected edit.
//!
//! cargo run --example assemble_article

use newsgen::assembler::{load_manifest, render_article, validate_manifest, EditOp, SentencePool};
use newsgen::novelty::read_kept;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = std::path::Path::new("data/fixtures/assembly");
    let pool = SentencePool::new(read_kept(&dir.join("pool.jsonl"))?);
    let manifest = load_manifest(&dir.join("manifest.json"))?;

    let verdict = validate_manifest(&manifest, &pool);
    println!("manifest {:?}: valid = {}", manifest.id, verdict.valid);
    let article = render_article(&manifest, &pool)?;
    println!("{} words\n\n{}", article.word_count(), article.to_text());

    let mut broken = manifest.clone();
    broken.body[0].edit = EditOp::DeleteChar { position: 0 };
    for v in validate_manifest(&broken, &pool).violations {
        println!("rejected: {} at {}: {}", v.rule, v.location, v.message);
    }
    Ok(())
}
