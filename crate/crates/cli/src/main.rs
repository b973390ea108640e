//! Command-line front end for the nonlocal Kirchhoff control solver.
//!
//! Exit codes: 0 when every run converged, 2 when at least one run hit the
//! iteration cap, 1 on configuration or numerical errors.

mod config;
mod expr;
mod output;
mod runner;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::{ExperimentConfig, Preset};
use runner::{Reporter, RunOutcome};

#[derive(Parser)]
#[command(
    name = "kirchhoff",
    about = "Optimal control of the stationary nonlocal Kirchhoff equation",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Key-value config file overriding the subcommand preset.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Output directory for CSV and field files.
    #[arg(long, global = true, default_value = "out", value_name = "DIR")]
    out: PathBuf,

    /// Chain penalty-sweep solves from the previous final iterate.
    #[arg(long, global = true)]
    warmstart: bool,

    /// Pinned mesh level (1..=3: grid resolutions 12 / 25 / 50).
    #[arg(long, global = true, value_name = "N")]
    mesh_level: Option<usize>,

    /// Suppress progress output.
    #[arg(long, global = true)]
    quiet: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the state equation for the control u = u_a.
    Forward,
    /// Run one full control solve.
    Solve,
    /// Non-locality sweep over the `alphas` list.
    SweepAlpha,
    /// Mesh-independence study over uniform refinements.
    SweepMesh,
    /// Penalty sweep over the `epsilons` list.
    SweepEps,
}

fn run(cli: &Cli) -> kirchhoff::Result<RunOutcome> {
    let preset = match cli.command {
        Command::Forward | Command::Solve => Preset::Single,
        Command::SweepAlpha => Preset::Alpha,
        Command::SweepMesh => Preset::MeshStudy,
        Command::SweepEps => Preset::EpsSweep,
    };
    let mut cfg = ExperimentConfig::preset(preset);
    if let Some(path) = &cli.config {
        cfg.apply_file(path).map_err(|e| {
            kirchhoff::Error::InvalidConfig(format!("{}: {e}", path.display()))
        })?;
    }
    if let Some(level) = cli.mesh_level {
        cfg.mesh_n = runner::mesh_level_resolution(level)?;
        cfg.mesh_file = None;
    }
    if cli.warmstart {
        cfg.warmstart = true;
    }
    let rep = Reporter::new(cli.quiet);
    match cli.command {
        Command::Forward => runner::run_forward(&cfg, &cli.out, &rep),
        Command::Solve => runner::run_solve(&cfg, &cli.out, &rep),
        Command::SweepAlpha => runner::run_sweep_alpha(&cfg, &cli.out, &rep),
        Command::SweepMesh => runner::run_sweep_mesh(&cfg, &cli.out, &rep),
        Command::SweepEps => runner::run_sweep_eps(&cfg, &cli.out, cfg.warmstart, &rep),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(RunOutcome { all_converged: true }) => ExitCode::SUCCESS,
        Ok(RunOutcome { all_converged: false }) => {
            eprintln!("warning: at least one run did not converge");
            ExitCode::from(2)
        }
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(1)
        }
    }
}
