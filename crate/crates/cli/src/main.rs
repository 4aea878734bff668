//! `mvrec`: coherent forecasting for multivariate hierarchical time series.
//!
//! Subcommands:
//!
//! * `simulate-study`: run a synthetic benchmark of reconciliation methods,
//! * `reconcile`: project an external forecast bundle onto the coherent
//!   subspace,
//! * `evaluate`: rolling-origin evaluation on an observed panel,
//! * `scenario-info`: print a builtin scenario as an editable config.
//!
//! Exit codes: 0 on success, 2 for configuration or input-format problems,
//! 1 for runtime failures. Errors print as a single `error: ...` line.

mod commands;
mod tables;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use mvrec_core::error::{Error, Result};

use commands::{
    cmd_evaluate, cmd_reconcile, cmd_scenario_info, cmd_simulate_study, EvaluateOpts,
    ReconcileOpts, ScenarioInfoOpts, SimulateStudyOpts,
};

#[derive(Parser)]
#[command(
    name = "mvrec",
    version,
    about = "Coherent forecasting for multivariate hierarchical time series"
)]
struct Cli {
    /// Worker threads (default: all available cores). Results are identical
    /// for any thread count.
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a simulation study of reconciliation methods on synthetic data
    SimulateStudy(SimulateStudyArgs),
    /// Reconcile an externally produced forecast bundle
    Reconcile(ReconcileArgs),
    /// Rolling-origin forecast evaluation on an observed panel
    Evaluate(EvaluateArgs),
    /// Print a builtin scenario configuration
    ScenarioInfo(ScenarioInfoArgs),
}

#[derive(Args)]
struct SimulateStudyArgs {
    /// Builtin scenario id (1..=9)
    #[arg(long)]
    scenario: Option<u32>,
    /// Scenario config file (alternative to --scenario)
    #[arg(long)]
    spec: Option<PathBuf>,
    /// Override the replicate count
    #[arg(long)]
    reps: Option<usize>,
    /// Override the RNG seed
    #[arg(long)]
    seed: Option<u64>,
    /// Base forecaster: seasonal-mean, arx, arx:<lags>, or var1
    #[arg(long, default_value = "arx")]
    forecaster: String,
    /// Weight estimator; repeat for several (default: shrinkage)
    #[arg(long = "estimator")]
    estimators: Vec<String>,
    /// Joint projection form: direct, proj-j, or proj-m
    #[arg(long, default_value = "proj-m")]
    method: String,
    /// Output directory
    #[arg(long)]
    out: PathBuf,
    /// Also write per-replicate signed error tables
    #[arg(long)]
    dump_errors: bool,
}

#[derive(Args)]
struct ReconcileArgs {
    /// Hierarchy definition (TOML with [[node]] entries)
    #[arg(long)]
    hierarchy: PathBuf,
    /// Forecast bundle manifest (TOML naming forecast and residual CSVs)
    #[arg(long)]
    bundle: PathBuf,
    /// Weight estimator: sample, shrinkage, diagonal, or identity
    #[arg(long, default_value = "shrinkage")]
    estimator: String,
    /// direct, proj-j, proj-m, or univariate
    #[arg(long, default_value = "proj-m")]
    method: String,
    /// Output directory
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvaluateArgs {
    /// Hierarchy definition (TOML with [[node]] entries)
    #[arg(long)]
    hierarchy: PathBuf,
    /// Observation panel CSV (time,node,variable,value)
    #[arg(long)]
    panel: PathBuf,
    /// Forecast horizon
    #[arg(long, default_value_t = 12)]
    horizons: usize,
    /// Number of expanding-window forecast origins
    #[arg(long, default_value_t = 12)]
    origins: usize,
    /// Seasonal period for forecasters and scaled errors
    #[arg(long, default_value_t = 12)]
    period: usize,
    /// Base forecaster: seasonal-mean, arx, arx:<lags>, or var1
    #[arg(long, default_value = "arx")]
    forecaster: String,
    /// Weight estimator: sample, shrinkage, diagonal, or identity
    #[arg(long, default_value = "shrinkage")]
    estimator: String,
    /// Joint projection form: direct, proj-j, or proj-m
    #[arg(long, default_value = "proj-m")]
    method: String,
    /// Output directory
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ScenarioInfoArgs {
    /// Builtin scenario id (1..=9)
    #[arg(long)]
    scenario: u32,
    /// Write to a file instead of stdout
    #[arg(long)]
    out: Option<PathBuf>,
}

fn run(cli: Cli) -> Result<()> {
    let body = move || -> Result<()> {
        match &cli.command {
            Command::SimulateStudy(args) => cmd_simulate_study(&SimulateStudyOpts {
                scenario: args.scenario,
                spec_path: args.spec.clone(),
                reps: args.reps,
                seed: args.seed,
                forecaster: args.forecaster.clone(),
                estimators: args.estimators.clone(),
                method: args.method.clone(),
                out: args.out.clone(),
                dump_errors: args.dump_errors,
            }),
            Command::Reconcile(args) => cmd_reconcile(&ReconcileOpts {
                hierarchy: args.hierarchy.clone(),
                bundle: args.bundle.clone(),
                estimator: args.estimator.clone(),
                method: args.method.clone(),
                out: args.out.clone(),
            }),
            Command::Evaluate(args) => cmd_evaluate(&EvaluateOpts {
                hierarchy: args.hierarchy.clone(),
                panel: args.panel.clone(),
                horizons: args.horizons,
                origins: args.origins,
                period: args.period,
                forecaster: args.forecaster.clone(),
                estimator: args.estimator.clone(),
                method: args.method.clone(),
                out: args.out.clone(),
            }),
            Command::ScenarioInfo(args) => cmd_scenario_info(&ScenarioInfoOpts {
                scenario: args.scenario,
                out: args.out.clone(),
            }),
        }
    };

    match cli.threads {
        Some(k) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(k)
                .build()
                .map_err(|e| {
                    Error::InvalidArgument(format!("cannot build a {k}-thread pool: {e}"))
                })?;
            pool.install(body)
        }
        None => body(),
    }
}

/// Configuration and input-format problems exit 2; runtime failures exit 1.
fn exit_code(err: &Error) -> u8 {
    match err {
        Error::InvalidArgument(_)
        | Error::InvalidInput(_)
        | Error::Structure(_)
        | Error::ShapeMismatch(_)
        | Error::TomlParse(_) => 2,
        _ => 1,
    }
}

fn main() -> ExitCode {
    env_logger::init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
