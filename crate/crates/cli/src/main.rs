//! Command-line front end for grid point allocation, controller synthesis,
//! closed-loop analysis, and benchmark simulation.

mod commands;
mod config;
mod io;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

/// Command failure with the process exit code it maps to.
#[derive(Debug)]
pub enum Failure {
    /// Bad usage or configuration: exit code 2.
    Config(String),
    /// A runtime error after valid inputs: exit code 1.
    Runtime(String),
}

impl Failure {
    pub fn config(msg: String) -> Self {
        Failure::Config(msg)
    }

    pub fn runtime(msg: String) -> Self {
        Failure::Runtime(msg)
    }

    pub fn code(&self) -> i32 {
        match self {
            Failure::Config(_) => 2,
            Failure::Runtime(_) => 1,
        }
    }

    pub fn message(&self) -> &str {
        match self {
            Failure::Config(m) | Failure::Runtime(m) => m,
        }
    }
}

#[derive(Parser)]
#[command(
    name = "gridalloc",
    version,
    about = "Grid point allocation for robust and gain-scheduled controller design"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Grow the design grid by searching for worst-case parameter points.
    Allocate(CommonArgs),
    /// Design a controller on the initial grid without growing it.
    Synthesize(CommonArgs),
    /// Sweep the closed loop over the parameter box and record the cost.
    Analyze(CommonArgs),
    /// Simulate the stored controller on the nonlinear benchmark.
    Simulate(CommonArgs),
    /// Summarize the artifacts of a run directory into summary.json.
    Report(CommonArgs),
}

#[derive(Args)]
pub struct CommonArgs {
    /// Run configuration file (JSON).
    #[arg(long)]
    pub config: Option<PathBuf>,

    /// Master random seed; overrides the config file.
    #[arg(long)]
    pub seed: Option<u64>,

    /// Run directory for artifacts; overrides the config file.
    #[arg(long)]
    pub out: Option<PathBuf>,

    /// Search effort preset: focused, balanced, or exploratory.
    #[arg(long)]
    pub profile: Option<String>,

    /// Points per axis for the validation sweep.
    #[arg(long)]
    pub density: Option<usize>,

    /// Worker threads; defaults to all cores.
    #[arg(long)]
    pub jobs: Option<usize>,
}

fn run(cmd: &Cmd) -> Result<(), Failure> {
    let args = match cmd {
        Cmd::Allocate(a)
        | Cmd::Synthesize(a)
        | Cmd::Analyze(a)
        | Cmd::Simulate(a)
        | Cmd::Report(a) => a,
    };
    if let Some(jobs) = args.jobs {
        if jobs == 0 {
            return Err(Failure::config("--jobs must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .map_err(|e| Failure::runtime(format!("cannot size thread pool: {e}")))?;
    }
    match cmd {
        Cmd::Allocate(a) => commands::cmd_allocate(a),
        Cmd::Synthesize(a) => commands::cmd_synthesize(a),
        Cmd::Analyze(a) => commands::cmd_analyze(a),
        Cmd::Simulate(a) => commands::cmd_simulate(a),
        Cmd::Report(a) => commands::cmd_report(a),
    }
}

fn main() {
    let cli = Cli::parse();
    if let Err(f) = run(&cli.cmd) {
        eprintln!("error: {}", f.message());
        std::process::exit(f.code());
    }
}
