use std::path::PathBuf;
use std::process::ExitCode;

use bmac_harness::config::base_dir;
use bmac_harness::{run_experiment, ExperimentConfig, ExperimentKind, Overrides, SolverKind};
use clap::{Args, Parser, Subcommand};

/// Runs polite water-filling experiments from TOML configurations.
#[derive(Parser)]
#[command(name = "bmac", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Two-link rate-region boundary along rays.
    RegionSweep(RunArgs),
    /// Per-iteration sum power of each solver.
    ConvergenceTrace(RunArgs),
    /// Mean minimum sum power against total target rate.
    PowerVsRate(RunArgs),
    /// Distributed training rounds.
    PrdRounds(RunArgs),
    /// Objective of every encoding/decoding order.
    OrderCompare(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Experiment configuration file.
    #[arg(long)]
    config: PathBuf,
    /// Run a single seed instead of the configured list.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, default_value = "results")]
    out: PathBuf,
    /// Run a single solver instead of the configured list.
    #[arg(long, value_enum)]
    solver: Option<SolverKind>,
    /// Solver tolerance.
    #[arg(long)]
    tol: Option<f64>,
}

fn run(kind: ExperimentKind, args: RunArgs) -> bmac_harness::Result<()> {
    let mut cfg = ExperimentConfig::load(&args.config)?;
    if cfg.kind != kind {
        return Err(bmac_harness::HarnessError::Config(format!(
            "{} describes a {} experiment, not {}",
            args.config.display(),
            cfg.kind.name(),
            kind.name()
        )));
    }
    cfg.apply(&Overrides { seed: args.seed, solver: args.solver, tol: args.tol })?;
    let artifacts = run_experiment(&cfg, &base_dir(&args.config))?;
    std::fs::create_dir_all(&args.out)?;
    for a in artifacts {
        let path = args.out.join(&a.name);
        std::fs::write(&path, a.csv)?;
        println!("{}", path.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (kind, args) = match cli.command {
        Command::RegionSweep(a) => (ExperimentKind::RegionSweep, a),
        Command::ConvergenceTrace(a) => (ExperimentKind::ConvergenceTrace, a),
        Command::PowerVsRate(a) => (ExperimentKind::PowerVsRate, a),
        Command::PrdRounds(a) => (ExperimentKind::PrdRounds, a),
        Command::OrderCompare(a) => (ExperimentKind::OrderCompare, a),
    };
    match run(kind, args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
