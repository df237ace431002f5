//! `tsfl` command line: run experiment matrices, compare latency, re-analyse
//! output directories and list the built-in scenarios.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use tsfl_core::error::Error;
use tsfl_core::experiment::{compare_latency, report, run_experiment, RunConfig};
use tsfl_core::scheduler::{Scenario, DEFAULT_CLIENTS, PRESETS};

const OUT_DIR_ENV: &str = "TSFL_OUT_DIR";
const DEFAULT_OUT_DIR: &str = "tsfl-out";

const EXIT_FAILURE: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_CELLS_FAILED: u8 = 3;

#[derive(Parser)]
#[command(name = "tsfl", version, about = "Time-driven synchronous federated learning simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Execute every (scenario, strategy, seed) cell of a config.
    Run(RunArgs),
    /// Compare synchronous-round and interval-clock wall-clock totals.
    Latency(RunArgs),
    /// Recompute the summary of an existing output directory.
    Report {
        /// Output directory to re-analyse.
        #[arg(long, env = OUT_DIR_ENV, default_value = DEFAULT_OUT_DIR)]
        out: PathBuf,
    },
    /// List the built-in scenarios.
    Presets,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides the config and the TSFL_OUT_DIR variable.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Master seed; replaces the config's seeds, keeping their count.
    #[arg(long)]
    seed: Option<u64>,
    /// Cells executed concurrently.
    #[arg(long, default_value_t = 1)]
    parallel: usize,
    /// Run only this strategy.
    #[arg(long)]
    strategy: Option<String>,
}

fn load(args: &RunArgs) -> Result<RunConfig, Error> {
    let text = fs::read_to_string(&args.config)
        .map_err(|e| Error::Config(format!("{}: {e}", args.config.display())))?;
    let mut config = RunConfig::parse(&text).map_err(|e| match e {
        Error::Config(msg) => Error::Config(format!("{}: {msg}", args.config.display())),
        other => other,
    })?;
    if let Some(name) = &args.strategy {
        config.override_strategy(name).map_err(|e| Error::Config(e.to_string()))?;
    }
    if let Some(seed) = args.seed {
        config.override_master_seed(seed);
    }
    Ok(config)
}

fn out_dir(args: &RunArgs, config: &RunConfig) -> PathBuf {
    args.out
        .clone()
        .or_else(|| config.output_dir.clone())
        .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR))
}

fn fail(e: &Error) -> ExitCode {
    eprintln!("error: {e}");
    let code = match e {
        Error::Config(_) | Error::UnknownStrategy(_) | Error::UnknownScenario(_) => EXIT_CONFIG,
        _ => EXIT_FAILURE,
    };
    ExitCode::from(code)
}

fn cmd_run(args: &RunArgs) -> Result<ExitCode, Error> {
    let config = load(args)?;
    let dir = out_dir(args, &config);
    let outcome = run_experiment(&config, &dir, args.parallel)?;
    for cell in outcome.cells.iter().filter(|c| c.error.is_some()) {
        eprintln!("cell {} failed: {}", cell.id, cell.error.as_deref().unwrap_or_default());
    }
    println!(
        "{} cells, {} failed; outputs in {}",
        outcome.cells.len(),
        outcome.failed_cells(),
        dir.display()
    );
    Ok(if outcome.failed_cells() > 0 { ExitCode::from(EXIT_CELLS_FAILED) } else { ExitCode::SUCCESS })
}

fn cmd_latency(args: &RunArgs) -> Result<ExitCode, Error> {
    let config = load(args)?;
    let dir = out_dir(args, &config);
    let rows = compare_latency(&config, Some(&dir))?;
    println!("{:<24} {:>13} {:>9} {:>14} {:>14} {:>8}", "scenario", "heterogeneity", "required", "sfl", "tsfl", "ratio");
    for r in &rows {
        println!(
            "{:<24} {:>13.4} {:>9} {:>14.4} {:>14.4} {:>8.4}",
            r.scenario, r.heterogeneity, r.required_iterations, r.sfl_wall_clock, r.tsfl_wall_clock, r.ratio
        );
    }
    println!("table written to {}", dir.join("latency.csv").display());
    Ok(ExitCode::SUCCESS)
}

fn cmd_report(dir: &Path) -> Result<ExitCode, Error> {
    let rows = report(dir)?;
    for r in &rows {
        let loss = r.mean_final_loss.map_or_else(|| "-".to_string(), |x| format!("{x:.6e}"));
        println!("{}/{}: {} runs, {} failed, mean final loss {loss}", r.scenario, r.strategy, r.runs, r.failed);
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_presets() -> Result<ExitCode, Error> {
    for name in PRESETS {
        let s = Scenario::preset(name, DEFAULT_CLIENTS)?;
        let rates: Vec<f64> = s.nominal_rates();
        let lo = rates.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = rates.iter().copied().fold(0.0, f64::max);
        println!("{name:<12} {} clients, nominal iterations per interval {lo}..{hi}", s.num_clients());
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run(args) => cmd_run(args),
        Command::Latency(args) => cmd_latency(args),
        Command::Report { out } => cmd_report(out),
        Command::Presets => cmd_presets(),
    };
    result.unwrap_or_else(|e| fail(&e))
}
