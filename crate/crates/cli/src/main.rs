//! `hetr`: ingest case counts, fit the renewal model, score fits, simulate
//! branching processes and intervention scenarios, and assemble tables.
//!
//! Exit codes: 0 ok, 2 invalid input or failed validation, 3 non-convergence.

mod config;
mod fit;
mod ingest;
mod intervene;
mod output;
mod report;
mod synth;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Parser, Subcommand};
use hetr_core::rng::Seed;
use hetr_core::IncidenceSeries;

use config::RunConfig;
use output::OutDir;

#[derive(Parser)]
#[command(name = "hetr", version, about = "Epidemic renewal models with a distribution-valued R")]
struct Cli {
    /// JSON run configuration; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Directory every output file is written to.
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    /// Global seed. Falls back to the config seed, then 0.
    #[arg(long, global = true, env = "HETR_SEED")]
    seed: Option<u64>,
    /// Replace existing posterior files.
    #[arg(long, global = true)]
    force: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Cumulative case CSV to smoothed daily incidence, one JSON per region.
    Ingest(ingest::IngestArgs),
    /// Sample the posterior of the renewal model on one window.
    Fit(fit::FitArgs),
    /// Recompute convergence diagnostics; exits 3 when not converged.
    Diagnose(fit::DiagnoseArgs),
    /// Predictive ordinates (PPO, CPO, LPPD, LPML) per model variant.
    Evaluate(fit::EvaluateArgs),
    /// Branching-process ensembles and the constant-R recovery study.
    Synth(synth::SynthArgs),
    /// Tail-capping and mean-shrinking scenarios from a fitted posterior.
    Intervene(intervene::InterveneArgs),
    /// Summary tables and envelope figures from stored outputs.
    Report(report::ReportArgs),
}

/// Shared state of one invocation.
pub struct Ctx {
    pub cfg: RunConfig,
    pub out: OutDir,
    pub seed: u64,
    pub force: bool,
}

impl Ctx {
    /// Seed of one fitted window: global seed, then region, then start date.
    pub fn window_seed(&self, w: &IncidenceSeries) -> Seed {
        Seed(self.seed).child_str(&w.region).child_str(&w.start_date.to_string())
    }
}

/// Marker error for exit code 3.
#[derive(Debug)]
pub struct NotConverged(pub String);

impl std::fmt::Display for NotConverged {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "not converged: {}", self.0)
    }
}

impl std::error::Error for NotConverged {}

fn run(cli: Cli) -> Result<()> {
    let cfg = RunConfig::load(cli.config.as_deref())?;
    let root = cli.out_dir.clone().or_else(|| cfg.out_dir.clone()).unwrap_or_else(|| PathBuf::from("."));
    let ctx = Ctx { seed: cfg.seed(cli.seed), out: OutDir::create(&root)?, cfg, force: cli.force };
    match cli.command {
        Command::Ingest(a) => ingest::run(&ctx, a),
        Command::Fit(a) => fit::run_fit(&ctx, a),
        Command::Diagnose(a) => fit::run_diagnose(&ctx, a),
        Command::Evaluate(a) => fit::run_evaluate(&ctx, a),
        Command::Synth(a) => synth::run(&ctx, a),
        Command::Intervene(a) => intervene::run(&ctx, a),
        Command::Report(a) => report::run(&ctx, a),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) if e.downcast_ref::<NotConverged>().is_some() => {
            eprintln!("hetr: {e}");
            ExitCode::from(3)
        }
        Err(e) => {
            eprintln!("hetr: {e:#}");
            ExitCode::from(2)
        }
    }
}
