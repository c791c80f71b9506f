mod check;
mod commands;
mod config;
mod output;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use commands::CliResult;
use config::{Experiment, RunConfig};

/// Optimal actuator placement for a damped Euler-Bernoulli beam.
#[derive(Parser)]
#[command(name = "actopt", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the level-set shape optimization with alpha continuation.
    Optimize(Common),
    /// Simulate the closed and open loop for a fixed actuator.
    Simulate(Common),
    /// Optimize over a grid of mode counts and damping values.
    Sweep(Common),
    /// Verify the solver and the gradient on the configured problem.
    Check(Common),
    /// Run whatever the `experiment` key selects.
    Run(Common),
}

#[derive(Args)]
struct Common {
    /// TOML configuration file; missing keys take their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory (`check` writes nothing unless given).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Override a configuration key, e.g. `--set n_modes=20`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

fn dispatch(experiment: Experiment, cfg: &RunConfig, out: Option<&Path>) -> CliResult<()> {
    let dir = out.unwrap_or(Path::new("out"));
    match experiment {
        Experiment::Optimize => commands::optimize(cfg, dir),
        Experiment::Simulate => commands::simulate(cfg, dir),
        Experiment::Sweep => commands::sweep(cfg, dir),
        Experiment::Check => check::check(cfg, out),
    }
}

fn run(cli: Cli) -> CliResult<()> {
    let (forced, args) = match cli.command {
        Command::Optimize(a) => (Some(Experiment::Optimize), a),
        Command::Simulate(a) => (Some(Experiment::Simulate), a),
        Command::Sweep(a) => (Some(Experiment::Sweep), a),
        Command::Check(a) => (Some(Experiment::Check), a),
        Command::Run(a) => (None, a),
    };
    let cfg = RunConfig::load(args.config.as_deref(), &args.overrides)?;
    dispatch(forced.unwrap_or(cfg.experiment), &cfg, args.out.as_deref())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
