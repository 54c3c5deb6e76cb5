//! `rpbfem` command line: adaptive finite element runs for the regularized
//! Poisson-Boltzmann problem driven by a flat key = value config file.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 grid assumption
//! or verification failure, 3 solver failure.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use rpbfem::Error;

use commands::Options;
use config::RunConfig;

#[derive(Parser)]
#[command(name = "rpbfem", version, about = "Adaptive FEM solver for the regularized Poisson-Boltzmann equation")]
struct Cli {
    /// Run configuration file (key = value lines, `#` comments)
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (overrides output_dir from the config)
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Print per-iteration traces
    #[arg(long, global = true)]
    verbose: bool,
    /// Trade accuracy for speed (coarser quadrature, looser linear solves)
    #[arg(long, global = true)]
    fast: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check the M-matrix / quantitative angle conditions on a structured grid
    VerifyGrid {
        /// Grid family: square, cube5 or cube6
        #[arg(long)]
        grid: Option<String>,
        /// Subdivisions per axis
        #[arg(long)]
        n: Option<usize>,
    },
    /// Solve once on the initial mesh; writes solution VTK and Newton trace CSV
    Solve,
    /// Run the adaptive loop; writes history CSV and per-iteration VTK
    Adapt,
    /// Uniform-refinement error table for a manufactured solution
    ConvergenceStudy,
    /// Solve on a uniformly refined mesh to produce reference data
    ReferenceSolve,
}

fn exit_code_for(err: &Error) -> u8 {
    match err {
        Error::Config(_) | Error::Io(_) => 1,
        Error::Model(_)
        | Error::Singularity { .. }
        | Error::SigmaViolation { .. }
        | Error::DegenerateElement { .. }
        | Error::NonConforming(_)
        | Error::Structural(_) => 2,
        Error::Overflow { .. }
        | Error::LinearMaxIter { .. }
        | Error::Indefinite { .. }
        | Error::LineSearchStall { .. }
        | Error::NewtonMaxIter { .. }
        | Error::InvalidReference { .. } => 3,
        Error::Afem { source, .. } => exit_code_for(source),
    }
}

fn run(cli: &Cli) -> Result<u8, Error> {
    let cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    let opts = Options {
        verbose: cli.verbose,
        fast: cli.fast,
    };
    match &cli.command {
        Command::VerifyGrid { grid, n } => {
            let pass = commands::cmd_verify_grid(&cfg, grid.as_deref(), *n)?;
            Ok(if pass { 0 } else { 2 })
        }
        Command::Solve => commands::cmd_solve(&cfg, &opts, &cli.out).map(|()| 0),
        Command::Adapt => commands::cmd_adapt(&cfg, &opts, &cli.out).map(|()| 0),
        Command::ConvergenceStudy => {
            commands::cmd_convergence_study(&cfg, &opts, &cli.out).map(|()| 0)
        }
        Command::ReferenceSolve => commands::cmd_reference_solve(&cfg, &opts, &cli.out).map(|()| 0),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_code_for(&err))
        }
    }
}
