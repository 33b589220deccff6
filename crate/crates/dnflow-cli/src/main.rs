use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use dnflow_cli::commands::{
    continuation_cmd, depend_cmd, fit_cmd, run_cmd, stationary_cmd, validate_cmd, CommandArgs,
};

/// Configuration-driven solver and verification laboratory for doubly
/// nonlinear flows `alpha(u_t) + B u + W'(u) = f`.
#[derive(Parser)]
#[command(name = "dnflow", version, about)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args)]
struct Common {
    /// TOML scenario configuration
    #[arg(long)]
    config: PathBuf,
    /// Output directory (overrides [output].dir)
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads for parameter sweeps
    #[arg(long, default_value_t = 1)]
    threads: usize,
    /// Snapshot interval in steps (overrides [output].checkpoint_every)
    #[arg(long = "checkpoint-every")]
    checkpoint_every: Option<usize>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Validate the scenario, run the scheme, write ledger/snapshots/reports
    Run(Common),
    /// Solve the stationary problem along the regularization ladder
    Stationary(Common),
    /// Refinement study over a (tau, eps, nu) ladder
    Continuation(Common),
    /// Continuous-dependence experiment over initial-datum perturbations
    Depend(Common),
    /// Detect the omega limit and fit the decay law
    Fit(Common),
    /// Hypothesis validation only
    Validate(Common),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (common, f): (&Common, fn(&CommandArgs) -> Result<(), dnflow_cli::CliError>) =
        match &cli.cmd {
            Cmd::Run(c) => (c, run_cmd),
            Cmd::Stationary(c) => (c, stationary_cmd),
            Cmd::Continuation(c) => (c, continuation_cmd),
            Cmd::Depend(c) => (c, depend_cmd),
            Cmd::Fit(c) => (c, fit_cmd),
            Cmd::Validate(c) => (c, validate_cmd),
        };
    let args = CommandArgs {
        config: common.config.clone(),
        out: common.out.clone(),
        threads: common.threads.max(1),
        checkpoint_every: common.checkpoint_every,
    };
    match f(&args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.to_json());
            e.failure.exit_code()
        }
    }
}
