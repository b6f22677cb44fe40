//! Runs one pipeline stage (default `all`) from a pipeline.json.
//!
//! cargo run --release --example pipeline_run -- data/toy/pipeline.json all

use std::path::PathBuf;

use newsgen::pipeline::{Pipeline, Stage};

fn main() {
    let mut args = std::env::args().skip(1);
    let config = PathBuf::from(args.next().unwrap_or_else(|| "data/toy/pipeline.json".into()));
    let stage: Stage = args.next().as_deref().unwrap_or("all").parse().expect("stage name");
    let mut pipeline = Pipeline::load(&config).unwrap_or_else(|e| {
        eprintln!("{e}");
        std::process::exit(e.exit_code());
    });
    pipeline.verbose = true;
    match pipeline.run(stage) {
        Ok(reports) => {
            for r in reports {
                println!("{:<8} {} outputs{}", r.stage.name(), r.outputs.len(), if r.skipped { " (up to date)" } else { "" });
            }
        }
        Err(e) => {
            eprintln!("{e}");
            std::process::exit(e.exit_code());
        }
    }
}
