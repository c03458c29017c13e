//! `mdag`: enumerate and classify marginalized DAGs.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use anyhow::{Context as _, Result};
use clap::{Args, Parser, Subcommand};
use mdag_core::classify::{classify, Context, Stage, StageConfig, Status};
use mdag_core::enumeration::{build_fingerprint_index, load_or_enumerate_mdags, PatternLibrary};
use mdag_core::error::Error;
use mdag_core::graph::parse_graph;
use mdag_core::pipeline::{
    emit_report, read_store, run_census, verify_store, CensusConfig, ReportFormat, StoreState, DEFAULT_TIMEOUT,
};
use mdag_core::supports::{solve, trivially_incompatible, CardSpec, Compatibility, Engine, SolverConfig, Support};

#[derive(Parser)]
#[command(name = "mdag", version, about = "Enumerate and classify marginalized DAGs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write every mDAG on N observed nodes to mdags-n{N}.jsonl.
    Enumerate {
        #[arg(long)]
        nodes: usize,
        /// Output directory.
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Classify every mDAG on N observed nodes and print the report.
    Census {
        #[arg(long)]
        nodes: usize,
        #[command(flatten)]
        run: RunArgs,
        /// Parallel workers; 0 uses every core.
        #[arg(long, default_value_t = 0)]
        jobs: usize,
        #[arg(long, env = "MDAG_CACHE_DIR")]
        cache_dir: Option<PathBuf>,
        #[arg(long, default_value = "markdown")]
        format: String,
    },
    /// Classify one graph given as JSON.
    ClassifyOne {
        #[arg(long)]
        graph: PathBuf,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Decide whether a support is compatible with a graph.
    CheckSupport {
        #[arg(long)]
        graph: PathBuf,
        #[arg(long)]
        support: PathBuf,
        /// Largest latent cardinality; defaults to the event count.
        #[arg(long)]
        bound: Option<usize>,
        #[arg(long, default_value = "hybrid")]
        engine: String,
    },
    /// Re-check every witness of a verdict store.
    Verify {
        #[arg(long)]
        store: PathBuf,
    },
    /// Print or validate the four-node pattern fixture.
    Patterns {
        /// Validate this JSONL file instead of printing the bundled fixture.
        #[arg(long)]
        check: Option<PathBuf>,
    },
}

#[derive(Args)]
struct RunArgs {
    /// Comma-separated stages.
    #[arg(long, value_delimiter = ',')]
    stages: Option<Vec<String>>,
    /// Comma-separated cardinality vectors, e.g. 2222,3222.
    #[arg(long, value_delimiter = ',')]
    schedule: Option<Vec<String>>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Random supports added to targeted schedule entries.
    #[arg(long, default_value_t = 0)]
    samples: usize,
    /// Per-graph time budget in seconds; 0 disables it.
    #[arg(long, default_value_t = DEFAULT_TIMEOUT.as_secs())]
    timeout_secs: u64,
}

impl RunArgs {
    fn stages(&self) -> Result<Vec<Stage>> {
        match &self.stages {
            None => Ok(Stage::ALL.to_vec()),
            Some(list) => list.iter().map(|s| Ok(s.parse::<Stage>()?)).collect(),
        }
    }

    fn schedule(&self, n: usize) -> Result<Vec<CardSpec>> {
        match &self.schedule {
            None => Ok(CensusConfig::default_schedule(n)),
            Some(list) => list.iter().map(|s| Ok(s.parse::<CardSpec>()?)).collect(),
        }
    }

    fn timeout(&self) -> Option<Duration> {
        (self.timeout_secs > 0).then(|| Duration::from_secs(self.timeout_secs))
    }
}

/// Failure classes mapped to exit codes.
enum Failure {
    Verification(String),
    Usage(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        match e.downcast_ref::<Error>() {
            Some(Error::CacheCorruption { .. }) => Failure::Verification(format!("{e:#}")),
            _ => Failure::Usage(e),
        }
    }
}

fn read_graph(path: &Path) -> Result<mdag_core::graph::MDag> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    parse_graph(&text).with_context(|| format!("parsing {}", path.display()))
}

fn run(cli: Cli) -> std::result::Result<(), Failure> {
    match cli.command {
        Command::Enumerate { nodes, out } => {
            let mdags = load_or_enumerate_mdags(nodes, None).map_err(anyhow::Error::from)?;
            let mut body = String::new();
            for m in &mdags {
                body.push_str(&serde_json::to_string(m).map_err(anyhow::Error::from)?);
                body.push('\n');
            }
            fs::create_dir_all(&out).map_err(anyhow::Error::from)?;
            let path = out.join(format!("mdags-n{nodes}.jsonl"));
            fs::write(&path, body).map_err(anyhow::Error::from)?;
            println!("{} mDAGs written to {}", mdags.len(), path.display());
        }
        Command::Census { nodes, run, jobs, cache_dir, format } => {
            let fmt: ReportFormat = format.parse().map_err(anyhow::Error::from)?;
            let cfg = CensusConfig {
                stages: run.stages()?,
                schedule: run.schedule(nodes)?,
                timeout: run.timeout(),
                jobs,
                cache_dir,
                seed: run.seed,
                samples: run.samples,
            };
            let report = run_census(nodes, &cfg).map_err(anyhow::Error::from)?;
            for t in &report.timings {
                log::info!("stage {}: {:.2}s", t.stage, t.seconds);
            }
            let bytes = emit_report(&report, fmt).map_err(anyhow::Error::from)?;
            print!("{}", String::from_utf8_lossy(&bytes));
        }
        Command::ClassifyOne { graph, run } => {
            let m = read_graph(&graph)?;
            let n = m.n_observed();
            let index = build_fingerprint_index(n).map_err(anyhow::Error::from)?;
            let cfg = StageConfig {
                stages: run.stages()?,
                schedule: run.schedule(n)?,
                deadline: run.timeout().map(|t| Instant::now() + t),
                samples: run.samples,
                seed: run.seed,
                parallel: true,
            };
            if n >= 5 && cfg.stages.contains(&Stage::Subgraph) {
                return Err(Failure::Usage(anyhow::anyhow!(
                    "the subgraph stage needs a census store; use `census` or drop the stage"
                )));
            }
            let v = classify(&m, &cfg, &Context { index: &index, lower: None }).map_err(anyhow::Error::from)?;
            println!("{}", serde_json::to_string_pretty(&v).map_err(anyhow::Error::from)?);
        }
        Command::CheckSupport { graph, support, bound, engine } => {
            let m = read_graph(&graph)?;
            let text = fs::read_to_string(&support).with_context(|| format!("reading {}", support.display()))?;
            let s: Support = serde_json::from_str(&text).with_context(|| format!("parsing {}", support.display()))?;
            let engine = match engine.as_str() {
                "backtrack" => Engine::Backtrack,
                "sat" => Engine::Sat,
                "hybrid" => Engine::Hybrid,
                other => return Err(Failure::Usage(anyhow::anyhow!("unknown engine {other:?}"))),
            };
            if let Some(w) = trivially_incompatible(&s, &m).map_err(anyhow::Error::from)? {
                println!("Incompatible (trivially)");
                println!("{}", serde_json::to_string_pretty(&w).map_err(anyhow::Error::from)?);
                return Ok(());
            }
            let cfg = SolverConfig { engine, bound, ..Default::default() };
            let c = solve(&s, &m, &cfg).map_err(anyhow::Error::from)?;
            match &c {
                Compatibility::Compatible { .. } => println!("Compatible"),
                Compatibility::Incompatible { .. } => println!("Incompatible"),
            }
            println!("{}", serde_json::to_string_pretty(&c).map_err(anyhow::Error::from)?);
        }
        Command::Verify { store } => {
            let verdicts = match read_store(&store).map_err(anyhow::Error::from)? {
                StoreState::Complete(v) => v,
                StoreState::Partial(_) => {
                    return Err(Failure::Verification(format!("{} is an unfinished journal", store.display())))
                }
            };
            let failed = verify_store(&verdicts);
            let non_alg = verdicts.iter().filter(|v| v.status == Status::NonAlgebraic).count();
            println!("{} verdicts, {} NonAlgebraic, {} failed verification", verdicts.len(), non_alg, failed.len());
            if !failed.is_empty() {
                for c in &failed {
                    eprintln!("failed: {c}");
                }
                return Err(Failure::Verification(format!("{} witnesses failed", failed.len())));
            }
        }
        Command::Patterns { check } => match check {
            None => print!("{}", PatternLibrary::load().map_err(anyhow::Error::from)?.to_jsonl()),
            Some(path) => {
                let text = fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
                match PatternLibrary::parse(&text) {
                    Ok(lib) => println!("{} patterns valid", lib.patterns.len()),
                    Err(e) => return Err(Failure::Verification(format!("invalid pattern file: {e}"))),
                }
            }
        },
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Verification(msg)) => {
            eprintln!("verification failed: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Usage(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
