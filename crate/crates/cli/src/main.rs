//! Command-line front end: trains the shipped benchmark problems, runs
//! noise-robustness sweeps, integrates the generating models, benchmarks
//! callback parallelism and prints collocation schemes. Exit codes: 0 the
//! solve converged (or the command has no solve), 2 iteration limit, 3
//! solver failure, 4 bad input.

mod commands;
mod svg;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use odecol::problems::{ProblemError, RoadClass, Strategy, SurrogateKind};

#[derive(Parser)]
#[command(
    name = "odecol",
    version,
    about = "Collocation-based trainer for dynamic models with embedded learned components"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Print collocation nodes, quadrature weights and the differentiation matrix as CSV
    Nodes(NodesArgs),
    /// Integrate a benchmark's generating model and write its trajectory as CSV
    Simulate(SimulateArgs),
    /// Train a benchmark model and write solution, trajectory and report files
    Train(TrainArgs),
    /// Run repeated oscillator trainings across noise levels and aggregate percentile bands
    Sweep(SweepArgs),
    /// Measure NLP callback timing and determinism across thread counts
    BenchCallbacks(BenchArgs),
}

#[derive(Args)]
pub struct NodesArgs {
    /// stages per interval
    #[arg(long)]
    pub stages: usize,
    /// write to this file instead of stdout
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args)]
pub struct SimulateArgs {
    /// vdp or qvm
    pub problem: String,
    /// simulated horizon, s
    #[arg(long, default_value_t = 7.0)]
    pub horizon: f64,
    /// oscillator stiffness parameter
    #[arg(long, default_value_t = 1.0)]
    pub mu: f64,
    /// road synthesis seed (qvm)
    #[arg(long, default_value_t = 11)]
    pub road_seed: u64,
    /// road roughness class, C or D (qvm)
    #[arg(long, default_value = "D", value_parser = parse_road_class)]
    pub road_class: RoadClass,
    /// traversal speed, m/s (qvm)
    #[arg(long, default_value_t = 25.0)]
    pub speed: f64,
    /// samples per second (qvm)
    #[arg(long, default_value_t = 1000.0)]
    pub rate: f64,
    /// write to this file instead of stdout
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args)]
pub struct TrainArgs {
    /// vdp or qvm
    pub problem: String,
    /// mesh intervals (default: 500 for vdp, 625 for qvm, 2500 with --full-scale)
    #[arg(long)]
    pub intervals: Option<usize>,
    /// collocation stages per interval
    #[arg(long, default_value_t = 5)]
    pub stages: usize,
    /// measurement noise std on the oscillator samples (vdp)
    #[arg(long, default_value_t = 0.0)]
    pub sigma: f64,
    /// Tikhonov weight (vdp; default picked from --sigma)
    #[arg(long)]
    pub lambda: Option<f64>,
    /// relative measurement noise on the vehicle accelerations (qvm)
    #[arg(long, default_value_t = 0.0)]
    pub noise: f64,
    /// road synthesis seed (qvm)
    #[arg(long, default_value_t = 11)]
    pub road_seed: u64,
    /// initialization strategy: I, II or III (qvm)
    #[arg(long, default_value = "I")]
    pub strategy: Strategy,
    /// surrogate family: nn or rational (qvm)
    #[arg(long, default_value = "nn")]
    pub surrogate: SurrogateKind,
    /// run seed; data noise and parameter draws derive from it
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// callback threads (default: ODECOL_THREADS or 1)
    #[arg(long)]
    pub threads: Option<usize>,
    /// iteration cap (default: 200, or 150 with --full-scale)
    #[arg(long)]
    pub max_iter: Option<usize>,
    /// KKT tolerance
    #[arg(long, default_value_t = 1e-7)]
    pub tol: f64,
    /// the 42 s / 2500-interval vehicle configuration (qvm)
    #[arg(long)]
    pub full_scale: bool,
    /// also render SVG charts
    #[arg(long)]
    pub svg: bool,
    /// one solver log line per iteration on stderr
    #[arg(long)]
    pub verbose: bool,
    /// output directory (default out/train-<problem>)
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args)]
pub struct SweepArgs {
    /// vdp
    pub problem: String,
    /// trainings per noise level
    #[arg(long, default_value_t = 20)]
    pub runs: usize,
    /// single noise level; omit to sweep 0, 0.1 and 0.5
    #[arg(long)]
    pub sigma: Option<f64>,
    /// mesh intervals per training
    #[arg(long)]
    pub intervals: Option<usize>,
    /// collocation stages per interval
    #[arg(long, default_value_t = 5)]
    pub stages: usize,
    /// base seed; run seeds count up from it
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// callback threads inside each run (default: ODECOL_THREADS or 1)
    #[arg(long)]
    pub threads: Option<usize>,
    /// iteration cap per run
    #[arg(long)]
    pub max_iter: Option<usize>,
    /// KKT tolerance
    #[arg(long, default_value_t = 1e-7)]
    pub tol: f64,
    /// also render SVG percentile charts
    #[arg(long)]
    pub svg: bool,
    /// output directory (default out/sweep-vdp)
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args)]
pub struct BenchArgs {
    /// thread counts to measure, first one is the baseline
    #[arg(long, value_delimiter = ',', default_values_t = [1usize, 4, 8])]
    pub threads_list: Vec<usize>,
    /// mesh intervals (default 625, 2500 with --full-scale)
    #[arg(long)]
    pub intervals: Option<usize>,
    /// collocation stages per interval
    #[arg(long, default_value_t = 5)]
    pub stages: usize,
    /// evaluations averaged per measurement
    #[arg(long, default_value_t = 5)]
    pub repeats: usize,
    /// parameter-initialization seed
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// the 42 s / 2500-interval vehicle configuration
    #[arg(long)]
    pub full_scale: bool,
    /// also write the timing table to this CSV file
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn parse_road_class(s: &str) -> Result<RoadClass, String> {
    match s.to_ascii_uppercase().as_str() {
        "C" => Ok(RoadClass::C),
        "D" => Ok(RoadClass::D),
        _ => Err(format!("unknown road class '{s}', expected C or D")),
    }
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 4 } else { 0 };
            let _ = e.print();
            std::process::exit(code);
        }
    };
    let result = match &cli.cmd {
        Cmd::Nodes(a) => commands::cmd_nodes(a),
        Cmd::Simulate(a) => commands::cmd_simulate(a),
        Cmd::Train(a) => commands::cmd_train(a),
        Cmd::Sweep(a) => commands::cmd_sweep(a),
        Cmd::BenchCallbacks(a) => commands::cmd_bench(a),
    };
    let code = match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            classify_error(&e)
        }
    };
    std::process::exit(code);
}

/// bad input exits 4, failures inside a run exit 3, environment trouble 1
fn classify_error(e: &anyhow::Error) -> i32 {
    if e.downcast_ref::<commands::BadFlag>().is_some() {
        return 4;
    }
    match e.downcast_ref::<ProblemError>() {
        Some(ProblemError::BadConfig(_)) | Some(ProblemError::Data(_)) => 4,
        Some(_) => 3,
        None => 1,
    }
}
