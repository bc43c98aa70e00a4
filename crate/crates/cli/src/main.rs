//! `lidar-restore`: synthesize, restore and score single-photon lidar cubes.

mod commands;
mod config;

use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Debug)]
pub struct CliError {
    kind: &'static str,
    message: String,
}

impl CliError {
    pub fn config(message: impl Into<String>) -> Self {
        CliError { kind: "config", message: message.into() }
    }

    pub fn io(message: impl Into<String>) -> Self {
        CliError { kind: "io", message: message.into() }
    }

    pub fn usage(message: impl Into<String>) -> Self {
        CliError { kind: "usage", message: message.into() }
    }

    pub fn kind(&self) -> &'static str {
        self.kind
    }

    pub fn message(&self) -> &str {
        &self.message
    }
}

impl From<lidar_restore::Error> for CliError {
    fn from(e: lidar_restore::Error) -> Self {
        CliError { kind: e.kind(), message: e.to_string() }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let flat: String = self.message.split_whitespace().collect::<Vec<_>>().join(" ");
        write!(f, "error[{}]: {}", self.kind, flat)
    }
}

#[derive(Parser)]
#[command(name = "lidar-restore", version, about = "Depth and reflectivity restoration for single-photon lidar")]
struct Cli {
    /// Worker threads (0 = one per core). Outputs do not depend on it.
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Draw a photon cube and its ground truth from a preset scene.
    Synth(SynthArgs),
    /// Estimate depth and reflectivity images from a cube.
    Restore(RestoreArgs),
    /// Score estimated images against ground truth.
    Eval(EvalArgs),
    /// Fit the Gaussian impulse response to measured samples.
    FitIrf(FitIrfArgs),
}

#[derive(Args)]
struct SynthArgs {
    /// Key=value file; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, short)]
    out_dir: PathBuf,
    /// v-b: ten-by-ten depth/reflectivity staircase; flat: uniform target.
    #[arg(long)]
    scene: Option<String>,
    #[arg(long)]
    rows: Option<usize>,
    #[arg(long)]
    cols: Option<usize>,
    /// Histogram length (flat scene).
    #[arg(long)]
    bins: Option<usize>,
    /// Target position in bins (flat scene).
    #[arg(long)]
    depth: Option<f64>,
    /// Target reflectivity (flat scene).
    #[arg(long)]
    refl: Option<f64>,
    /// Background, counts per bin (flat scene).
    #[arg(long)]
    bg: Option<f64>,
    /// Attenuation per bin (flat scene).
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    c1: Option<f64>,
    #[arg(long)]
    sigma2: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct RestoreArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    cube: PathBuf,
    #[arg(long, short)]
    out_dir: PathBuf,
    #[arg(long)]
    method: Option<String>,
    #[arg(long)]
    c1: Option<f64>,
    #[arg(long)]
    sigma2: Option<f64>,
    /// Attenuation per bin.
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    eta: Option<f64>,
    #[arg(long)]
    zeta: Option<f64>,
    /// Comma-separated TV weights to search (needs truth).
    #[arg(long)]
    eta_grid: Option<String>,
    /// Comma-separated gamma-MRF weights to search (needs truth).
    #[arg(long)]
    zeta_grid: Option<String>,
    /// Keep each photon with this probability before restoring.
    #[arg(long)]
    acq_subsample: Option<f64>,
    /// Keep bins FIRST..=LAST (1-based); output depths stay in input bins.
    #[arg(long, num_args = 2, value_names = ["FIRST", "LAST"])]
    gate: Option<Vec<usize>>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long)]
    n_max: Option<usize>,
    #[arg(long)]
    n_bi: Option<usize>,
    #[arg(long)]
    n_mc: Option<usize>,
    #[arg(long)]
    eta0: Option<f64>,
    #[arg(long)]
    zeta0: Option<f64>,
    #[arg(long)]
    truth_depth: Option<PathBuf>,
    #[arg(long)]
    truth_refl: Option<PathBuf>,
    /// Background used for the report's SBR and SNR.
    #[arg(long)]
    bg: Option<f64>,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    truth_depth: PathBuf,
    #[arg(long)]
    truth_refl: PathBuf,
    /// Estimated depth image; repeat for several estimates.
    #[arg(long, required = true)]
    depth: Vec<PathBuf>,
    /// Estimated reflectivity image, one per --depth.
    #[arg(long, required = true)]
    refl: Vec<PathBuf>,
    /// Acquisition time of each estimate, for the (t_acq, SRE) series.
    #[arg(long)]
    tacq: Vec<f64>,
    /// Cube the estimates came from, for the non-empty pixel percentage.
    #[arg(long)]
    cube: Option<PathBuf>,
    #[arg(long, short)]
    out_dir: PathBuf,
    #[arg(long)]
    c1: Option<f64>,
    #[arg(long)]
    bg: Option<f64>,
    #[arg(long)]
    alpha_per_m: Option<f64>,
    #[arg(long)]
    distance_m: Option<f64>,
}

#[derive(Args)]
struct FitIrfArgs {
    /// Two-column `bin,response` CSV; a header line is allowed.
    #[arg(long)]
    samples: PathBuf,
    /// Key=value output; stdout when absent.
    #[arg(long, short)]
    out: Option<PathBuf>,
}

fn run(cli: Cli) -> Result<(), CliError> {
    let threads = cli.threads;
    lidar_restore::par::with_threads(threads, move || match cli.command {
        Command::Synth(a) => commands::synth(a),
        Command::Restore(a) => commands::restore(a),
        Command::Eval(a) => commands::eval(a),
        Command::FitIrf(a) => commands::fit_irf(a),
    })
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let first = e.to_string();
            let first = first.lines().next().unwrap_or("invalid arguments");
            let first = first.strip_prefix("error: ").unwrap_or(first);
            eprintln!("{}", CliError::usage(first));
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(1)
        }
    }
}
