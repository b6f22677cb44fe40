use std::fmt::Display;
use std::net::{Ipv4Addr, SocketAddr};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use chrono::{DateTime, Utc};
use clap::{Parser, Subcommand};
use newsgen::corpus::{self, CorpusError, InputFormat};
use newsgen::decoder::read_pool;
use newsgen::novelty::{self, CorpusIndex, ScanMode};
use newsgen::pipeline::{Pipeline, Stage};
use newsgen::service::{self, AppState};
use newsgen::site::{self, SiteConfig, SiteError};

#[derive(Parser)]
#[command(name = "newsgen", version, about = "Topical news generation pipeline")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one pipeline stage, or `all` of them in order.
    Run {
        #[arg(value_parser = parse_stage)]
        stage: Stage,
        #[arg(long, default_value = "pipeline.json")]
        config: PathBuf,
        /// Worker threads; 1 gives byte-identical reruns.
        #[arg(long)]
        threads: Option<usize>,
        #[arg(long, short)]
        quiet: bool,
    },
    /// Judge every sentence of a generated pool against a corpus.
    Novelty {
        #[arg(long)]
        pool: PathBuf,
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long, default_value_t = novelty::DEFAULT_THRESHOLD)]
        threshold: f64,
        /// Always find the exact closest corpus sentence.
        #[arg(long)]
        exact: bool,
        /// Report file; stdout when absent.
        #[arg(long)]
        report: Option<PathBuf>,
        /// Where to write the kept sentences.
        #[arg(long)]
        kept: Option<PathBuf>,
    },
    /// Render the static blog from published article files.
    BuildSite {
        #[arg(long)]
        articles: PathBuf,
        #[arg(long)]
        config: PathBuf,
        /// Build time for the feed, RFC 3339.
        #[arg(long)]
        now: Option<DateTime<Utc>>,
        /// Output directory; the config's `output_dir` when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Serve the curation API on localhost.
    Serve {
        #[arg(long, default_value = "pipeline.json")]
        config: PathBuf,
        #[arg(long, default_value_t = 8080)]
        port: u16,
    },
}

fn parse_stage(s: &str) -> Result<Stage, String> {
    s.parse()
}

fn fail(e: impl Display, code: u8) -> ExitCode {
    eprintln!("error: {e}");
    ExitCode::from(code)
}

fn run(stage: Stage, config: &Path, threads: Option<usize>, quiet: bool) -> ExitCode {
    let mut pipeline = match Pipeline::load(config) {
        Ok(p) => p,
        Err(e) => return fail(&e, e.exit_code() as u8),
    };
    pipeline.verbose = !quiet;
    let result = match threads {
        Some(n) => pipeline.run_with_threads(stage, n),
        None => pipeline.run(stage),
    };
    match result {
        Ok(reports) => {
            for r in reports {
                let state = if r.skipped { "up to date" } else { "done" };
                eprintln!("{:<8} {state}  {}", r.stage.name(), pipeline.layout.display(&pipeline.report_path(r.stage)));
            }
            ExitCode::SUCCESS
        }
        Err(e) => fail(&e, e.exit_code() as u8),
    }
}

fn novelty(
    pool: &Path,
    corpus_path: &Path,
    threshold: f64,
    exact: bool,
    report: Option<&Path>,
    kept: Option<&Path>,
) -> ExitCode {
    let samples = match read_pool(pool) {
        Ok(s) => s,
        Err(e) => return fail(format!("{}: {e}", pool.display()), 2),
    };
    let store = match corpus::ingest(corpus_path, InputFormat::Jsonl) {
        Ok((s, _)) => s,
        Err(CorpusError::Io(e)) => return fail(format!("{}: {e}", corpus_path.display()), 1),
        Err(e) => return fail(format!("{}: {e}", corpus_path.display()), 2),
    };
    let index = CorpusIndex::build(&store);
    let mode = if exact { ScanMode::Exact } else { ScanMode::Pruned };
    let outcome = match novelty::filter_pool(&samples, &index, threshold, mode) {
        Ok(o) => o,
        Err(e) => return fail(e, 2),
    };
    let written = match report {
        Some(p) => novelty::write_report(p, &outcome),
        None => novelty::report_jsonl(&outcome).map(|text| print!("{text}")),
    };
    if let Err(e) = written {
        return fail(e, 1);
    }
    if let Some(p) = kept {
        if let Err(e) = novelty::write_kept(p, &outcome.kept) {
            return fail(e, 1);
        }
    }
    let s = outcome.summary();
    eprintln!(
        "kept {} of {} sentences against {} corpus sentences",
        s.kept,
        s.kept + s.rejected,
        index.len()
    );
    ExitCode::SUCCESS
}

fn build_site(articles: &Path, config: &Path, now: Option<DateTime<Utc>>, out: Option<PathBuf>) -> ExitCode {
    let mut cfg = match SiteConfig::load(config) {
        Ok(c) => c,
        Err(e) => return fail(format!("{}: {e}", config.display()), 2),
    };
    if now.is_some() {
        cfg.now = now;
    }
    let out = out.unwrap_or_else(|| match config.parent() {
        Some(dir) if cfg.output_dir.is_relative() => dir.join(&cfg.output_dir),
        _ => cfg.output_dir.clone(),
    });
    let code = |e: &SiteError| match e {
        SiteError::Io(_) => 1,
        _ => 2,
    };
    let published = match site::load_published(articles) {
        Ok(a) => a,
        Err(e) => return fail(&e, code(&e)),
    };
    match site::build_site(&published, &cfg, &out) {
        Ok(summary) => {
            eprintln!("{} files in {}", summary.files.len(), summary.output_dir.display());
            ExitCode::SUCCESS
        }
        Err(e) => fail(&e, code(&e)),
    }
}

fn serve(config: &Path, port: u16) -> ExitCode {
    let pipeline = match Pipeline::load(config) {
        Ok(p) => p,
        Err(e) => return fail(&e, e.exit_code() as u8),
    };
    let state = match AppState::new(&pipeline, AppState::system_clock()) {
        Ok(s) => s,
        Err(e) => return fail(e, 2),
    };
    let addr = SocketAddr::from((Ipv4Addr::LOCALHOST, port));
    let runtime = match tokio::runtime::Runtime::new() {
        Ok(r) => r,
        Err(e) => return fail(e, 1),
    };
    eprintln!("listening on http://{addr}");
    match runtime.block_on(service::serve(state, addr)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => fail(e, 1),
    }
}

fn main() -> ExitCode {
    match Cli::parse().command {
        Command::Run {
            stage,
            config,
            threads,
            quiet,
        } => run(stage, &config, threads, quiet),
        Command::Novelty {
            pool,
            corpus,
            threshold,
            exact,
            report,
            kept,
        } => novelty(&pool, &corpus, threshold, exact, report.as_deref(), kept.as_deref()),
        Command::BuildSite {
            articles,
            config,
            now,
            out,
        } => build_site(&articles, &config, now, out),
        Command::Serve { config, port } => serve(&config, port),
    }
}
