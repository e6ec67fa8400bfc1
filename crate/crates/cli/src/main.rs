mod config;
mod error;
mod manifest;
mod plot;
mod stages;
mod synth;

use std::path::PathBuf;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};

use crate::config::RunConfig;
use crate::error::{exit_code, UsageError, EXIT_OK, EXIT_USAGE};
use crate::stages::{run_pipeline, run_stage, Ctx, Stage};

/// Topic-trend driven selection of training periods for stock forecasting.
#[derive(Debug, Parser)]
#[command(name = "topicseg", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct RunArgs {
    /// TOML run configuration.
    #[arg(long, short)]
    config: PathBuf,
    /// Overrides `paths.output_dir`.
    #[arg(long)]
    run_dir: Option<PathBuf>,
    /// Rerun even when inputs and config are unchanged.
    #[arg(long)]
    force: bool,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Load and filter the corpus, fix the date splits, fetch prices.
    Ingest(RunArgs),
    /// Project keyword vectors onto principal components.
    Reduce(RunArgs),
    /// Density-cluster the reduced keyword vectors.
    Cluster(RunArgs),
    /// Name each keyword cluster.
    Label(RunArgs),
    /// Build daily topic frequency series on trading days.
    Series(RunArgs),
    /// Detect topic regime changes over the training range.
    Breakpoints(RunArgs),
    /// Cut the training range into candidate segments.
    Segment(RunArgs),
    /// Score and rank segments against forecast topic trends.
    Select(RunArgs),
    /// Fit the baseline, all-topic and selected-segment stock models.
    Forecast(RunArgs),
    /// Compute error metrics and error-fix dates.
    Evaluate(RunArgs),
    /// Withhold one topic at a time and report the MSE change.
    Ablate(RunArgs),
    /// Run every stage in order.
    Pipeline(RunArgs),
    /// Write the synthetic fixture corpus and its config.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 7)]
        seed: u64,
    },
}

fn context(args: &RunArgs) -> Result<Ctx> {
    let cfg = RunConfig::load(&args.config).map_err(|e| UsageError(format!("{e:#}")))?;
    let run_dir = args.run_dir.clone().unwrap_or_else(|| cfg.paths.output_dir.clone());
    // Ignored if a pool already exists.
    let _ = rayon::ThreadPoolBuilder::new().num_threads(cfg.workers).build_global();
    Ctx::new(cfg, run_dir, args.force)
}

fn dispatch(command: Command) -> Result<()> {
    let (stage, args) = match command {
        Command::Synth { out, seed } => {
            synth::write_fixtures(&out, seed)?;
            println!("synth: wrote fixtures to {}", out.display());
            return Ok(());
        }
        Command::Pipeline(args) => return run_pipeline(&mut context(&args)?),
        Command::Ingest(a) => (Stage::Ingest, a),
        Command::Reduce(a) => (Stage::Reduce, a),
        Command::Cluster(a) => (Stage::Cluster, a),
        Command::Label(a) => (Stage::Label, a),
        Command::Series(a) => (Stage::Series, a),
        Command::Breakpoints(a) => (Stage::Breakpoints, a),
        Command::Segment(a) => (Stage::Segment, a),
        Command::Select(a) => (Stage::Select, a),
        Command::Forecast(a) => (Stage::Forecast, a),
        Command::Evaluate(a) => (Stage::Evaluate, a),
        Command::Ablate(a) => (Stage::Ablate, a),
    };
    run_stage(&mut context(&args)?, stage)
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            std::process::exit(code);
        }
    };
    if let Err(e) = dispatch(cli.command) {
        eprintln!("error: {e:#}");
        std::process::exit(exit_code(&e));
    }
}
