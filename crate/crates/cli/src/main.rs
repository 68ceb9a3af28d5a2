//! `svcluster`: generate data, train budgeted one-class SVMs, cluster, score
//! and audit from the command line. Every invocation writes a JSON manifest
//! next to its primary output.

mod commands;
mod error;
mod grid;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use svcluster::data::Shape;
use svcluster::BudgetStrategy;

use crate::grid::Metric;

#[derive(Parser, Debug)]
#[command(
    name = "svcluster",
    version,
    about = "Support vector clustering with budgeted SGD"
)]
struct Cli {
    /// Where to write the run manifest (default: `<primary output>.manifest.json`).
    #[arg(long, global = true)]
    manifest: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write a synthetic labelled dataset as CSV.
    Generate(GenerateArgs),
    /// Fit a model and write it with its per-step trace.
    Train(TrainArgs),
    /// Assign cluster labels with a trained model.
    Cluster(ClusterArgs),
    /// Score a labelling with the validity indices.
    Evaluate(EvaluateArgs),
    /// Train, cluster and score over a (gamma, C) grid.
    Gridsearch(GridArgs),
    /// Audit a training trace against the theoretical bounds.
    Diagnose(DiagnoseArgs),
}

#[derive(Args, Debug)]
pub struct GenerateArgs {
    #[arg(long)]
    pub shape: Shape,
    /// Points per component.
    #[arg(long, default_value_t = 200)]
    pub n: usize,
    /// Noise level; defaults depend on the shape.
    #[arg(long)]
    pub noise: Option<f64>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug, Clone)]
pub struct DataArgs {
    /// Input CSV.
    #[arg(long)]
    pub data: PathBuf,
    /// The first CSV row is a header.
    #[arg(long)]
    pub header: bool,
    /// Zero-based column holding class labels, excluded from the features.
    #[arg(long)]
    pub label_column: Option<usize>,
    /// Standardize every feature to zero mean and unit variance first.
    #[arg(long)]
    pub standardize: bool,
}

#[derive(Args, Debug, Clone)]
pub struct TrainFlags {
    #[arg(long = "budget")]
    pub budget: Option<usize>,
    #[arg(long, default_value = "removal")]
    pub strategy: BudgetStrategy,
    /// Neighbours used by projection maintenance.
    #[arg(long, default_value_t = 5)]
    pub k: usize,
    #[arg(long, default_value_t = 0.01)]
    pub stop_theta: f64,
    #[arg(long, default_value_t = 100_000)]
    pub max_steps: usize,
    /// Ridge added to the projection Gram matrix.
    #[arg(long, default_value_t = 1e-10)]
    pub ridge: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Args, Debug, Clone)]
pub struct AssignFlags {
    /// Half-width of the boundary band; defaults to a quantile of |f| over the data.
    #[arg(long)]
    pub epsilon: Option<f64>,
    /// Quantile of |f| used when --epsilon is not given.
    #[arg(long, default_value_t = 0.1)]
    pub epsilon_quantile: f64,
    #[arg(long, default_value_t = 1e-6)]
    pub fp_tol: f64,
    #[arg(long, default_value_t = 500)]
    pub fp_max_iter: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub merge_tol: f64,
    #[arg(long, default_value_t = 20)]
    pub m_samples: usize,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long)]
    pub gamma: f64,
    #[arg(long = "C")]
    pub c: f64,
    #[command(flatten)]
    pub train: TrainFlags,
    /// Model JSON output.
    #[arg(long)]
    pub out: PathBuf,
    /// Trace JSON-lines output (default: `<out>.trace.jsonl`).
    #[arg(long)]
    pub trace: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct ClusterArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub assign: AssignFlags,
    /// Labels CSV output.
    #[arg(long)]
    pub out: PathBuf,
    /// Sidecar JSON output (default: `<out>.sidecar.json`).
    #[arg(long)]
    pub sidecar: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct EvaluateArgs {
    /// Labels CSV written by `cluster`.
    #[arg(long)]
    pub labels: PathBuf,
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct GridArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, value_delimiter = ',', default_values_t = grid::default_grid())]
    pub gamma_grid: Vec<f64>,
    #[arg(long = "C-grid", alias = "c-grid", value_delimiter = ',', default_values_t = grid::default_grid())]
    pub c_grid: Vec<f64>,
    #[arg(long, default_value = "purity")]
    pub metric: Metric,
    /// Worker threads for grid cells.
    #[arg(long, env = "SVCLUSTER_JOBS", default_value_t = 1)]
    pub jobs: usize,
    #[command(flatten)]
    pub train: TrainFlags,
    #[command(flatten)]
    pub assign: AssignFlags,
    /// Ranked table CSV output.
    #[arg(long)]
    pub out: PathBuf,
    /// Best model JSON output (default: `<out>.best-model.json`).
    #[arg(long)]
    pub best_model: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct DiagnoseArgs {
    #[arg(long)]
    pub trace: PathBuf,
    #[arg(long = "C")]
    pub c: f64,
    #[arg(long, default_value = "removal")]
    pub strategy: BudgetStrategy,
    /// Bound on ‖φ(x)‖; 1 for the RBF kernel.
    #[arg(long, default_value_t = 1.0)]
    pub r: f64,
    #[arg(long)]
    pub out: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let manifest = cli.manifest.as_deref();
    let result = match &cli.command {
        Command::Generate(a) => commands::generate(a, manifest),
        Command::Train(a) => commands::train(a, manifest),
        Command::Cluster(a) => commands::cluster(a, manifest),
        Command::Evaluate(a) => commands::evaluate(a, manifest),
        Command::Gridsearch(a) => grid::gridsearch(a, manifest),
        Command::Diagnose(a) => commands::diagnose(a, manifest),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("svcluster: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
