//! `atypicality`: the staged novelty and conventionality pipeline.

mod artifacts;
mod error;
mod presets;
mod regress;
mod report;
mod stages;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use artifacts::Context;
use error::{CliError, Result};

#[derive(Debug, Parser)]
#[command(name = "atypicality", version, about = "Journal co-citation novelty and conventionality pipeline")]
struct Cli {
    /// Seed for the null model and the synthetic generator.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; defaults to the available cores.
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Directory holding every artifact.
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Parse a JSON Lines corpus into corpus.jsonl.
    Ingest(stages::IngestArgs),
    /// Count data problems in corpus.jsonl.
    Validate(stages::GeoArgs),
    /// Pair counts, the Monte Carlo null and article profiles.
    Score(stages::ScoreArgs),
    /// Novelty and conventionality bins and the four categories.
    Classify(stages::ClassifyArgs),
    /// Collaboration covariates per article.
    Covariates(stages::GeoArgs),
    /// Fit a named table or a single custom model.
    Regress(regress::RegressArgs),
    /// Render a table or a figure dataset.
    Report(report::ReportArgs),
    /// Generate a synthetic corpus with planted structure.
    Synth(stages::SynthArgs),
    /// Compare the Monte Carlo null with exact enumeration.
    OracleNull(stages::OracleArgs),
}

fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.workers {
        if n == 0 {
            return Err(CliError::Input("--workers must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Input(e.to_string()))?;
    }
    let ctx = Context {
        out: cli.out,
        seed: cli.seed,
    };
    match &cli.command {
        Command::Ingest(a) => stages::ingest(&ctx, a),
        Command::Validate(a) => stages::validate(&ctx, a),
        Command::Score(a) => stages::score(&ctx, a),
        Command::Classify(a) => stages::classify(&ctx, a),
        Command::Covariates(a) => stages::covariates(&ctx, a),
        Command::Regress(a) => regress::regress(&ctx, a),
        Command::Report(a) => report::report(&ctx, a),
        Command::Synth(a) => stages::synth(&ctx, a),
        Command::OracleNull(a) => stages::oracle_null(&ctx, a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
