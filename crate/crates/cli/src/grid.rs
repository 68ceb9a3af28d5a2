use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use serde::Serialize;
use svcluster::data::Dataset;
use svcluster::rng::derive_seed;
use svcluster::{assign_clusters, cvi, train, CviReport, KernelExpansion};

use crate::commands::{assign_config, load_data, train_config};
use crate::error::{CliError, CliResult};
use crate::manifest::{manifest_path, ManifestBuilder};
use crate::GridArgs;

/// `{2^-5, 2^-3, 2^-1, 2^1, 2^3, 2^5}`.
pub fn default_grid() -> Vec<f64> {
    (-5..=5).step_by(2).map(|e| 2f64.powi(e)).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    Purity,
    Rand,
    Nmi,
    Compactness,
    Dbi,
}

impl Metric {
    fn needs_truth(self) -> bool {
        matches!(self, Metric::Purity | Metric::Rand | Metric::Nmi)
    }

    fn higher_is_better(self) -> bool {
        self.needs_truth()
    }

    fn pick(self, r: &CviReport) -> Option<f64> {
        match self {
            Metric::Purity => r.purity,
            Metric::Rand => r.rand,
            Metric::Nmi => r.nmi,
            Metric::Compactness => Some(r.compactness),
            Metric::Dbi => r.dbi,
        }
    }
}

impl FromStr for Metric {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "purity" => Ok(Metric::Purity),
            "rand" => Ok(Metric::Rand),
            "nmi" => Ok(Metric::Nmi),
            "compactness" => Ok(Metric::Compactness),
            "dbi" => Ok(Metric::Dbi),
            other => Err(format!(
                "unknown metric {other:?} (expected purity, rand, nmi, compactness or dbi)"
            )),
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Metric::Purity => "purity",
            Metric::Rand => "rand",
            Metric::Nmi => "nmi",
            Metric::Compactness => "compactness",
            Metric::Dbi => "dbi",
        };
        f.write_str(s)
    }
}

struct Cell {
    index: usize,
    gamma: f64,
    c: f64,
    seed: u64,
    outcome: Result<CellRun, String>,
}

struct CellRun {
    steps: usize,
    model: KernelExpansion,
    epsilon: f64,
    num_clusters: usize,
    report: CviReport,
}

fn run_cell(args: &GridArgs, data: &Dataset, gamma: f64, c: f64, seed: u64) -> CliResult<CellRun> {
    let mut flags = args.train.clone();
    flags.seed = seed;
    let cfg = train_config(gamma, c, &flags)?;
    let out = train(data, &cfg)?;
    let assign = assign_config(&args.assign, &out.model, data)?;
    let sol = assign_clusters(&out.model, data, &assign)?;
    let report = cvi::report(data, &sol.labels, data.labels())?;
    Ok(CellRun {
        steps: out.trace.steps(),
        model: out.model,
        epsilon: assign.epsilon,
        num_clusters: sol.num_clusters,
        report,
    })
}

fn score(metric: Metric, cell: &Cell) -> Option<f64> {
    cell.outcome
        .as_ref()
        .ok()
        .and_then(|r| metric.pick(&r.report))
}

/// Best first; cells without a score go last; ties keep grid order.
fn rank(metric: Metric, cells: &[Cell]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..cells.len()).collect();
    order.sort_by(|&a, &b| {
        let (sa, sb) = (score(metric, &cells[a]), score(metric, &cells[b]));
        let by_score = match (sa, sb) {
            (Some(x), Some(y)) if metric.higher_is_better() => y.total_cmp(&x),
            (Some(x), Some(y)) => x.total_cmp(&y),
            (Some(_), None) => std::cmp::Ordering::Less,
            (None, Some(_)) => std::cmp::Ordering::Greater,
            (None, None) => std::cmp::Ordering::Equal,
        };
        by_score.then(cells[a].index.cmp(&cells[b].index))
    });
    order
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn write_table(path: &Path, metric: Metric, cells: &[Cell], order: &[usize]) -> CliResult<()> {
    let file = std::fs::File::create(path).map_err(|e| CliError::io(path, e))?;
    let mut w = std::io::BufWriter::new(file);
    let io = |e| CliError::io(path, e);
    writeln!(
        w,
        "rank,cell,gamma,C,seed,score,num_clusters,support_size,steps,epsilon,purity,rand,nmi,compactness,dbi,status"
    )
    .map_err(io)?;
    for (rank, &i) in order.iter().enumerate() {
        let cell = &cells[i];
        let head = format!(
            "{},{},{},{},{}",
            rank + 1,
            cell.index,
            cell.gamma,
            cell.c,
            cell.seed
        );
        let line = match &cell.outcome {
            Ok(r) => format!(
                "{head},{},{},{},{},{},{},{},{},{},{},ok",
                opt(metric.pick(&r.report)),
                r.num_clusters,
                r.model.len(),
                r.steps,
                r.epsilon,
                opt(r.report.purity),
                opt(r.report.rand),
                opt(r.report.nmi),
                r.report.compactness,
                opt(r.report.dbi),
            ),
            Err(msg) => format!("{head},,,,,,,,,,,\"error: {}\"", msg.replace('"', "'")),
        };
        writeln!(w, "{line}").map_err(io)?;
    }
    w.flush().map_err(io)
}

pub fn gridsearch(args: &GridArgs, manifest: Option<&Path>) -> CliResult<()> {
    if args.gamma_grid.is_empty() || args.c_grid.is_empty() {
        return Err(CliError::Usage(
            "gamma and C grids must be non-empty".into(),
        ));
    }
    if args.jobs == 0 {
        return Err(CliError::Usage("--jobs must be at least 1".into()));
    }
    let mut m = ManifestBuilder::new("gridsearch");
    // Validate the shared flags once before any work.
    train_config(args.gamma_grid[0], args.c_grid[0], &args.train)?;
    let data = load_data(&args.data, &mut m)?;
    if args.metric.needs_truth() && data.labels().is_none() {
        return Err(CliError::Usage(format!(
            "metric {} needs ground-truth labels (--label-column)",
            args.metric
        )));
    }
    m.config(serde_json::json!({
        "gamma_grid": &args.gamma_grid,
        "C_grid": &args.c_grid,
        "metric": args.metric,
        "standardize": args.data.standardize,
        "budget": args.train.budget,
        "strategy": args.train.strategy,
        "k": args.train.k,
        "stop_theta": args.train.stop_theta,
        "max_steps": args.train.max_steps,
        "ridge": args.train.ridge,
        "epsilon": args.assign.epsilon,
        "epsilon_quantile": args.assign.epsilon_quantile,
        "fp_tol": args.assign.fp_tol,
        "fp_max_iter": args.assign.fp_max_iter,
        "merge_tol": args.assign.merge_tol,
        "m_samples": args.assign.m_samples,
    }))?;
    m.seed(args.train.seed);

    let grid: Vec<(usize, f64, f64)> = args
        .gamma_grid
        .iter()
        .flat_map(|&g| args.c_grid.iter().map(move |&c| (g, c)))
        .enumerate()
        .map(|(i, (g, c))| (i, g, c))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(args.jobs)
        .build()
        .map_err(|e| CliError::Usage(format!("cannot start {} worker threads: {e}", args.jobs)))?;
    let cells: Vec<Cell> = pool.install(|| {
        grid.par_iter()
            .map(|&(index, gamma, c)| {
                let seed = derive_seed(args.train.seed, index as u64);
                let outcome = run_cell(args, &data, gamma, c, seed).map_err(|e| e.to_string());
                Cell {
                    index,
                    gamma,
                    c,
                    seed,
                    outcome,
                }
            })
            .collect()
    });

    let order = rank(args.metric, &cells);
    write_table(&args.out, args.metric, &cells, &order)?;
    m.output(&args.out);

    let best = &cells[order[0]];
    let run = best.outcome.as_ref().map_err(|msg| {
        svcluster::Error::Numerical(format!("every grid cell failed; first error: {msg}"))
    })?;
    let best_path: PathBuf = args.best_model.clone().unwrap_or_else(|| {
        let mut s = args.out.as_os_str().to_os_string();
        s.push(".best-model.json");
        PathBuf::from(s)
    });
    std::fs::write(&best_path, run.model.to_json()? + "\n")
        .map_err(|e| CliError::io(&best_path, e))?;
    m.output(&best_path);
    m.finish(&manifest_path(&args.out, manifest))?;
    eprintln!(
        "best cell {}: gamma {} C {} {} {}",
        best.index,
        best.gamma,
        best.c,
        args.metric,
        opt(score(args.metric, best))
    );
    Ok(())
}
