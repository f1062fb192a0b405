//! `gpcollapse`: command-line driver for the collapse laboratory.

mod commands;
mod config;
mod svg;

use clap::{Args, Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "gpcollapse", version, about = "Townes profile, ground states and collapse sweeps for the 2D attractive Gross-Pitaevskii functional")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Solve for the radial ground state Q; writes r,Q,Qprime and constants.json.
    QSolve {
        /// CSV output path; constants.json is written next to it.
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 30.0)]
        rmax: f64,
        /// Intervals of the graded output mesh.
        #[arg(long, default_value_t = 4000)]
        mesh: usize,
    },
    /// Collapse constants β and the energy limit for the configured potential.
    Constants(ConfigArgs),
    /// Classify the singular points and sample the potential on the grid.
    PotentialCheck(ConfigArgs),
    /// Minimize the energy at one interaction strength.
    Minimize {
        #[command(flatten)]
        args: ConfigArgs,
        /// Overrides `a_over_astar` from the config.
        #[arg(long)]
        a_over_astar: Option<f64>,
    },
    /// Sweep a towards a* and fit the collapse rate.
    Sweep(ConfigArgs),
    /// Sweep and check every collapse prediction; writes report.json.
    Verify(ConfigArgs),
    /// Run the command named in the config.
    Run(ConfigArgs),
}

#[derive(Args, Clone)]
pub struct ConfigArgs {
    /// TOML configuration file.
    #[arg(long)]
    pub config: PathBuf,
    /// Radial profile CSV from `q-solve`; otherwise the profile is recomputed.
    #[arg(long)]
    pub from_profile: Option<PathBuf>,
    /// Artifact directory; overrides `output` from the config.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { commands::EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Cmd::QSolve { out, rmax, mesh } => commands::q_solve(&out, rmax, mesh),
        Cmd::Constants(args) => commands::constants(&args),
        Cmd::PotentialCheck(args) => commands::potential_check(&args),
        Cmd::Minimize { args, a_over_astar } => commands::minimize(&args, a_over_astar),
        Cmd::Sweep(args) => commands::sweep(&args),
        Cmd::Verify(args) => commands::verify(&args),
        Cmd::Run(args) => commands::run(&args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(commands::exit_code(&e))
        }
    }
}
