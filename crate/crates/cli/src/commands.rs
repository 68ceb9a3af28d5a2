use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};

use serde::Serialize;
use svcluster::assignment::{self, read_labels_csv};
use svcluster::data::{self, Dataset};
use svcluster::theory::audit_trace;
use svcluster::{
    assign_clusters, cvi, train as fit, AssignConfig, KernelExpansion, KernelSpec, TrainConfig,
    TrainTrace,
};

use crate::error::{CliError, CliResult};
use crate::manifest::{manifest_path, ManifestBuilder};
use crate::{
    AssignFlags, ClusterArgs, DataArgs, DiagnoseArgs, EvaluateArgs, GenerateArgs, TrainArgs,
    TrainFlags,
};

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_os_string();
    s.push(suffix);
    PathBuf::from(s)
}

fn create(path: &Path) -> CliResult<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| CliError::io(path, e))
}

fn write_json(path: &Path, value: &impl Serialize) -> CliResult<()> {
    let json = serde_json::to_string_pretty(value).map_err(svcluster::Error::from)?;
    std::fs::write(path, json + "\n").map_err(|e| CliError::io(path, e))
}

pub fn load_data(args: &DataArgs, manifest: &mut ManifestBuilder) -> CliResult<Dataset> {
    manifest.input(&args.data)?;
    let data = data::load_csv(&args.data, args.header, args.label_column)?;
    if args.standardize {
        Ok(data::standardize(&data)?.0)
    } else {
        Ok(data)
    }
}

pub fn train_config(gamma: f64, c: f64, flags: &TrainFlags) -> CliResult<TrainConfig> {
    let mut cfg = TrainConfig::new(KernelSpec::rbf(gamma)?, c);
    cfg.budget = flags.budget;
    cfg.strategy = flags.strategy;
    cfg.k = flags.k;
    cfg.stop_theta = flags.stop_theta;
    cfg.max_steps = flags.max_steps;
    cfg.ridge = flags.ridge;
    cfg.seed = flags.seed;
    cfg.validate()?;
    Ok(cfg)
}

/// Resolves the boundary width: the explicit value, or the configured quantile of |f|.
pub fn assign_config(
    flags: &AssignFlags,
    model: &KernelExpansion,
    data: &Dataset,
) -> CliResult<AssignConfig> {
    let epsilon = match flags.epsilon {
        Some(e) => e,
        None => assignment::suggest_epsilon(model, data, flags.epsilon_quantile)?,
    };
    let cfg = AssignConfig {
        epsilon,
        fp_tol: flags.fp_tol,
        fp_max_iter: flags.fp_max_iter,
        merge_tol: flags.merge_tol,
        m_samples: flags.m_samples,
    };
    cfg.validate()?;
    Ok(cfg)
}

pub fn generate(args: &GenerateArgs, manifest: Option<&Path>) -> CliResult<()> {
    let mut m = ManifestBuilder::new("generate");
    let shape = format!("{:?}", args.shape).to_lowercase();
    m.config(serde_json::json!({ "shape": shape, "n": args.n, "noise": args.noise }))?;
    m.seed(args.seed);
    let data = args.shape.generate(args.n, args.noise, args.seed)?;
    data::write_csv(&data, create(&args.out)?)?;
    m.output(&args.out);
    m.finish(&manifest_path(&args.out, manifest))?;
    Ok(())
}

pub fn train(args: &TrainArgs, manifest: Option<&Path>) -> CliResult<()> {
    let mut m = ManifestBuilder::new("train");
    let cfg = train_config(args.gamma, args.c, &args.train)?;
    m.config(serde_json::json!({ "train": &cfg, "standardize": args.data.standardize }))?;
    m.seed(cfg.seed);
    let data = load_data(&args.data, &mut m)?;
    let out = fit(&data, &cfg)?;

    std::fs::write(&args.out, out.model.to_json()? + "\n")
        .map_err(|e| CliError::io(&args.out, e))?;
    m.output(&args.out);
    let trace_path = args
        .trace
        .clone()
        .unwrap_or_else(|| with_suffix(&args.out, ".trace.jsonl"));
    out.trace.write_jsonl(create(&trace_path)?)?;
    m.output(&trace_path);
    m.finish(&manifest_path(&args.out, manifest))?;
    eprintln!(
        "trained {} steps, {} support vectors",
        out.trace.steps(),
        out.model.len()
    );
    Ok(())
}

pub fn cluster(args: &ClusterArgs, manifest: Option<&Path>) -> CliResult<()> {
    let mut m = ManifestBuilder::new("cluster");
    m.input(&args.model)?;
    let text = std::fs::read_to_string(&args.model).map_err(|e| CliError::io(&args.model, e))?;
    let model = KernelExpansion::from_json(&text)?;
    let data = load_data(&args.data, &mut m)?;
    if data.dim() != model.dim() {
        return Err(svcluster::Error::InvalidInput(format!(
            "model has dimension {} but data has {}",
            model.dim(),
            data.dim()
        ))
        .into());
    }
    let cfg = assign_config(&args.assign, &model, &data)?;
    m.config(serde_json::json!({ "assign": &cfg, "standardize": args.data.standardize }))?;
    let sol = assign_clusters(&model, &data, &cfg)?;

    sol.write_labels_csv(create(&args.out)?)?;
    m.output(&args.out);
    let sidecar = args
        .sidecar
        .clone()
        .unwrap_or_else(|| with_suffix(&args.out, ".sidecar.json"));
    write_json(&sidecar, &sol.sidecar())?;
    m.output(&sidecar);
    m.finish(&manifest_path(&args.out, manifest))?;
    eprintln!(
        "{} clusters from {} equilibria ({} boundary points)",
        sol.num_clusters,
        sol.num_equilibria(),
        sol.boundary_members.len()
    );
    Ok(())
}

pub fn evaluate(args: &EvaluateArgs, manifest: Option<&Path>) -> CliResult<()> {
    let mut m = ManifestBuilder::new("evaluate");
    m.config(serde_json::json!({ "standardize": args.data.standardize }))?;
    m.input(&args.labels)?;
    let file = File::open(&args.labels).map_err(|e| CliError::io(&args.labels, e))?;
    let predicted = read_labels_csv(BufReader::new(file))?;
    let data = load_data(&args.data, &mut m)?;
    let report = cvi::report(&data, &predicted, data.labels())?;
    write_json(&args.out, &report)?;
    m.output(&args.out);
    m.finish(&manifest_path(&args.out, manifest))?;
    Ok(())
}

pub fn diagnose(args: &DiagnoseArgs, manifest: Option<&Path>) -> CliResult<()> {
    let mut m = ManifestBuilder::new("diagnose");
    m.config(serde_json::json!({ "C": args.c, "strategy": args.strategy, "r": args.r }))?;
    m.input(&args.trace)?;
    let file = File::open(&args.trace).map_err(|e| CliError::io(&args.trace, e))?;
    let trace = TrainTrace::read_jsonl(BufReader::new(file))?;
    let report = audit_trace(&trace, args.c, args.r, args.strategy)?;
    write_json(&args.out, &report)?;
    m.output(&args.out);
    m.finish(&manifest_path(&args.out, manifest))?;
    if report.is_clean() {
        Ok(())
    } else {
        for (name, list) in [
            ("coefficient sum", &report.lemma1_violations),
            ("weight norm", &report.lemma2_violations),
            ("removed coefficient", &report.lemma4_violations),
        ] {
            for v in list {
                eprintln!(
                    "{name} step {}: observed {} > bound {}",
                    v.step, v.observed, v.bound
                );
            }
        }
        Err(CliError::Violations(report.violation_count()))
    }
}
