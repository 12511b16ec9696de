use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use pc_extrap::{run_path, Overrides, Workflow};

/// Optimal and minimax extrapolation of periodically correlated sequences.
#[derive(Debug, Parser)]
#[command(name = "pc-extrap", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Solve for the optimal estimate and its mean-square error.
    Estimate(Common),
    /// Compare the spectral error with time-domain projections over growing windows.
    OracleCheck(Common),
    /// Monte Carlo check of the analytic error on simulated Gaussian paths.
    Simulate(Common),
    /// Least favorable densities over an admissible class, with a saddle certificate.
    Minimax(Common),
}

#[derive(Debug, Args)]
struct Common {
    /// JSON run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Write the report here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Seed for simulation and saddle sampling.
    #[arg(long)]
    seed: Option<u64>,
    /// Frequency grid size.
    #[arg(long)]
    grid: Option<usize>,
    /// Truncation L of the future index set.
    #[arg(long)]
    truncation: Option<usize>,
    /// Monte Carlo trial count.
    #[arg(long)]
    trials: Option<usize>,
    /// Export the first simulated path as CSV (simulate only).
    #[arg(long)]
    csv: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let (workflow, args) = match cli.command {
        Command::Estimate(a) => (Workflow::Estimate, a),
        Command::OracleCheck(a) => (Workflow::OracleCheck, a),
        Command::Simulate(a) => (Workflow::Simulate, a),
        Command::Minimax(a) => (Workflow::Minimax, a),
    };
    let ov = Overrides { seed: args.seed, grid_size: args.grid, truncation: args.truncation, trials: args.trials };
    let outcome = run_path(workflow, &args.config, &ov, args.csv.as_deref());
    if let Some(msg) = &outcome.error {
        eprintln!("pc-extrap {}: {msg}", workflow.name());
    }
    let written = match &args.out {
        Some(p) => std::fs::write(p, &outcome.json),
        None => std::io::stdout().write_all(outcome.json.as_bytes()),
    };
    if let Err(e) = written {
        eprintln!("pc-extrap: cannot write report: {e}");
        return ExitCode::from(1);
    }
    ExitCode::from(outcome.exit_code as u8)
}
