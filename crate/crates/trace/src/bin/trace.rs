use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

use trace::pipeline::{load_config, Pipeline};

/// Multi-hop question answering through knowledge-grounded reasoning
/// chains: build per-question knowledge graphs from retrieved documents,
/// beam-search reasoning chains over them, answer from the chains, and
/// score the run.
#[derive(Parser)]
#[command(name = "trace", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct RunArgs {
    /// Path to the JSON run config.
    #[arg(long)]
    config: String,

    /// Process at most N questions.
    #[arg(long)]
    limit: Option<usize>,

    /// Reader context mode: triple, doc, none, or all_docs.
    #[arg(long)]
    mode: Option<String>,

    /// Worker threads over questions.
    #[arg(long)]
    workers: Option<usize>,

    /// Override any config field by dotted path, e.g.
    /// --set chain.max_len=2 or --set backends.selector.kind=http.
    /// Values parse as JSON when possible, otherwise as strings.
    #[arg(long = "set", value_name = "PATH=VALUE")]
    set: Vec<String>,
}

impl RunArgs {
    fn overrides(&self) -> Result<Vec<(String, String)>> {
        let mut overrides = Vec::new();
        if let Some(limit) = self.limit {
            overrides.push(("limit".to_string(), limit.to_string()));
        }
        if let Some(mode) = &self.mode {
            overrides.push(("mode".to_string(), mode.clone()));
        }
        if let Some(workers) = self.workers {
            overrides.push(("workers".to_string(), workers.to_string()));
        }
        for entry in &self.set {
            let (path, value) = entry
                .split_once('=')
                .with_context(|| format!("--set {entry:?} is not of the form PATH=VALUE"))?;
            overrides.push((path.to_string(), value.to_string()));
        }
        Ok(overrides)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Extract knowledge triples for every document into the cache.
    BuildKg(RunArgs),
    /// Beam-search reasoning chains over the cached knowledge graphs.
    ConstructChains(RunArgs),
    /// Generate answers under the configured context mode.
    Answer(RunArgs),
    /// Score predictions and write the run report.
    Evaluate(RunArgs),
    /// All four stages in order.
    RunAll(RunArgs),
}

impl Command {
    fn args(&self) -> &RunArgs {
        match self {
            Command::BuildKg(a)
            | Command::ConstructChains(a)
            | Command::Answer(a)
            | Command::Evaluate(a)
            | Command::RunAll(a) => a,
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    let args = cli.command.args();
    let loaded = load_config(&args.config, &args.overrides()?)?;
    let pipeline = Pipeline::new(loaded)?;
    match cli.command {
        Command::BuildKg(_) => {
            let summary = pipeline.build_kg()?;
            println!(
                "built knowledge graphs for {} questions: {} documents, {} cache hits, {} generator calls, {} triples",
                summary.questions,
                summary.documents,
                summary.cache_hits,
                summary.generator_calls,
                summary.triples
            );
            if summary.failures > 0 {
                println!("{} questions failed; see the run log", summary.failures);
            }
        }
        Command::ConstructChains(_) => {
            let outcome = pipeline.construct_chains()?;
            println!("constructed chains for {} questions", outcome.processed);
            report_failures(&outcome.failures);
        }
        Command::Answer(_) => {
            let outcome = pipeline.answer()?;
            println!("answered {} questions", outcome.processed);
            report_failures(&outcome.failures);
        }
        Command::Evaluate(_) => {
            let report = pipeline.evaluate()?;
            println!("{}", report.render_table());
        }
        Command::RunAll(_) => {
            let report = pipeline.run_all()?;
            println!("{}", report.render_table());
        }
    }
    Ok(())
}

fn report_failures(failures: &[trace::pipeline::QuestionFailure]) {
    for failure in failures {
        eprintln!("question {} failed: {}", failure.id, failure.error);
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
