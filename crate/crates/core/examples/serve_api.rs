//! Serves the curation API for a pipeline project whose `filter` stage has run.
//!
//! cargo run --release --example pipeline_run -- data/toy/pipeline.json filter
//! cargo run --example serve_api -- data/toy/pipeline.json 8080
//! curl localhost:8080/api/topics

use std::net::{Ipv4Addr, SocketAddr};

use newsgen::pipeline::Pipeline;
use newsgen::service::{serve, AppState};

#[tokio::main]
async fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let config = args.next().unwrap_or_else(|| "data/toy/pipeline.json".into());
    let port: u16 = args.next().map(|p| p.parse()).transpose()?.unwrap_or(8080);
    let pipeline = Pipeline::load(config.as_ref())?;
    let state = AppState::new(&pipeline, AppState::system_clock())?;
    let addr = SocketAddr::from((Ipv4Addr::LOCALHOST, port));
    println!("curation API on http://{addr}/api/topics");
    serve(state, addr).await?;
    Ok(())
}
