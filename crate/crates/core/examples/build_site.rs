//! Renders the static blog from published article files.
//!
//! cargo run --example build_site -- target/example-site

use std::path::PathBuf;

use newsgen::site::{build_site, load_published, SiteConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let out = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "target/example-site".into()));
    let fixture = std::path::Path::new("data/fixtures/site");
    let config = SiteConfig::load(&fixture.join("site.json"))?;
    let articles = load_published(&fixture.join("published"))?;
    let summary = build_site(&articles, &config, &out)?;
    println!("{} articles -> {} files in {}", articles.len(), summary.files.len(), summary.output_dir.display());
    for f in summary.files.iter().take(10) {
        println!("  {f}");
    }
    Ok(())
}
