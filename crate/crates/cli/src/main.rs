//! `bmech`: runs boundary-value mechanics scenarios on a system file and
//! writes JSON reports (plus CSV dumps for grid fields).

mod commands;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use report::Failure;

#[derive(Parser, Serialize, Debug)]
#[command(name = "bmech", version, about = "Boundary-value mechanics toolkit")]
pub struct Cli {
    /// System description (JSON).
    #[arg(long, global = true)]
    pub spec: Option<PathBuf>,
    /// Report path; the JSON goes to stdout when omitted.
    #[arg(long, global = true)]
    #[serde(skip)]
    pub out: Option<PathBuf>,
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long, global = true)]
    #[serde(skip)]
    pub threads: Option<usize>,
    /// Seed for randomized sweeps.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Serialize, Debug)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    /// Validate a system file and echo its canonical form.
    Parse,
    /// Solve the two-point problem and report action, momenta, Hessian and Green functions.
    Classical(ClassicalArgs),
    /// Brackets of boundary observables at an on-shell point.
    Brackets(BracketArgs),
    /// Commutator and ordering checks of the grid observables.
    QuantizeCheck(QuantizeArgs),
    /// Propagator kernel on a grid.
    Propagator(PropagatorArgs),
    /// Semiclassical amplitude and constraint residuals.
    Semiclassical(SemiclassicalArgs),
    /// Collect earlier reports into one document.
    Report(ReportArgs),
}

#[derive(Args, Serialize, Debug, Clone)]
pub struct ClassicalArgs {
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, required = true)]
    pub xi: Vec<f64>,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, required = true)]
    pub xf: Vec<f64>,
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    pub ti: f64,
    #[arg(long, allow_hyphen_values = true)]
    pub tf: f64,
    #[arg(long, default_value_t = 100)]
    pub slices: usize,
    /// Comma-separated slice counts for a refinement study.
    #[arg(long, value_delimiter = ',')]
    pub scan: Option<Vec<usize>>,
    #[arg(long, default_value_t = 50)]
    pub max_iter: usize,
}

#[derive(Args, Serialize, Debug, Clone)]
pub struct BracketArgs {
    /// Boundary values `x_f` then `x_i`.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, required = true)]
    pub at: Vec<f64>,
    /// Pairs `A:B` separated by commas; expressions in `x1..x2n` (boundary
    /// values) and `p1..p2n` (boundary momentum).
    #[arg(long, required = true)]
    pub pairs: String,
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    pub ti: f64,
    #[arg(long, default_value_t = 1.0, allow_hyphen_values = true)]
    pub tf: f64,
    #[arg(long, default_value_t = 200)]
    pub slices: usize,
    /// Random phase points for the identity sweep.
    #[arg(long, default_value_t = 16)]
    pub samples: usize,
}

#[derive(Args, Serialize, Debug, Clone)]
pub struct QuantizeArgs {
    #[arg(long, default_value_t = 128)]
    pub grid: usize,
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    pub gamma: f64,
}

#[derive(Args, Serialize, Debug, Clone)]
pub struct PropagatorArgs {
    #[arg(long = "T", allow_hyphen_values = true)]
    pub t: f64,
    #[arg(long, default_value_t = 128)]
    pub grid: usize,
    /// `cn` or `trotter`.
    #[arg(long, default_value = "cn")]
    pub method: String,
    #[arg(long, default_value_t = 256)]
    pub slices: usize,
}

#[derive(Args, Serialize, Debug, Clone)]
pub struct SemiclassicalArgs {
    #[command(flatten)]
    pub kernel: PropagatorArgs,
    /// Band-limiting window in wavenumber: pass band edge.
    #[arg(long)]
    pub pass: Option<f64>,
    /// Band-limiting window: stop band edge.
    #[arg(long)]
    pub stop: Option<f64>,
    /// Interior box `lo,hi` applied to every boundary coordinate.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub interior: Option<Vec<f64>>,
    /// Slices used for the classical action.
    #[arg(long, default_value_t = 200)]
    pub action_slices: usize,
    #[arg(long, default_value_t = 1)]
    pub stride: usize,
}

#[derive(Args, Serialize, Debug, Clone)]
pub struct ReportArgs {
    /// Reports written by earlier runs.
    #[arg(required = true)]
    pub inputs: Vec<PathBuf>,
}

fn init_logging() {
    let env = env_logger::Env::new().filter_or("BMECH_LOG", "error");
    let _ = env_logger::Builder::from_env(env).format_timestamp(None).try_init();
}

fn main() -> ExitCode {
    init_logging();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("error: --threads must be positive");
            return ExitCode::from(1);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: thread pool: {e}");
            return ExitCode::from(1);
        }
    }
    match commands::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Core(e)) => {
            eprintln!("error: {}: {e}", e.kind());
            ExitCode::from(if e.is_numerical() { 2 } else { 1 })
        }
    }
}
