//! Stochastic gradient descent for the large-margin one-class SVM primal
//!
//! ```text
//! J(w) = ½‖w‖² + (C/N) Σᵢ max{0, 1 - wᵀφ(xᵢ)}
//! ```
//!
//! with learning rate `η_t = 1/t` and optional budget maintenance. Each step
//! samples one point, shrinks `w` by `(t-1)/t` and, when the sampled point has
//! margin below 1, adds `(C/t)·φ(x)`. Once a new support point pushes the
//! model past its budget, the least significant term is removed or projected
//! onto `k` of its neighbors.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use nalgebra::{DMatrix, DVector};
use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{dim_mismatch, Error, Result};
use crate::kernel::{squared_distance, KernelExpansion, KernelSpec, DEFAULT_NORM_REFRESH};
use crate::rng::{stream_rng, StreamRng, STREAM_TRAIN};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BudgetStrategy {
    Removal,
    ProjectionKnn,
    ProjectionRandom,
}

impl BudgetStrategy {
    pub fn is_projection(self) -> bool {
        !matches!(self, BudgetStrategy::Removal)
    }
}

impl std::str::FromStr for BudgetStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "removal" => Ok(BudgetStrategy::Removal),
            "proj-knn" | "projection_knn" => Ok(BudgetStrategy::ProjectionKnn),
            "proj-rand" | "projection_random" => Ok(BudgetStrategy::ProjectionRandom),
            other => Err(Error::Config(format!(
                "unknown strategy {other:?} (expected removal, proj-knn or proj-rand)"
            ))),
        }
    }
}

/// How projection maintenance picks the span it projects onto.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NeighborSelector {
    Knn,
    Random,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub kernel: KernelSpec,
    pub c: f64,
    /// Maximum support size; `None` trains without maintenance.
    pub budget: Option<usize>,
    pub strategy: BudgetStrategy,
    pub k: usize,
    pub stop_theta: f64,
    pub max_steps: usize,
    pub seed: u64,
    pub ridge: f64,
    pub norm_refresh_every: usize,
    /// Also accumulate the averaged iterate `w̄_T = (1/T) Σ_{t≤T} w_t`.
    #[serde(default)]
    pub track_average: bool,
}

impl TrainConfig {
    pub fn new(kernel: KernelSpec, c: f64) -> Self {
        Self {
            kernel,
            c,
            budget: None,
            strategy: BudgetStrategy::Removal,
            k: 5,
            stop_theta: 0.01,
            max_steps: 100_000,
            seed: 0,
            ridge: 1e-10,
            norm_refresh_every: DEFAULT_NORM_REFRESH,
            track_average: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.kernel
            .validate()
            .map_err(|e| Error::Config(e.to_string()))?;
        if !(self.c > 0.0 && self.c.is_finite()) {
            return Err(Error::Config(format!(
                "C must be positive and finite, got {}",
                self.c
            )));
        }
        if self.budget == Some(0) {
            return Err(Error::Config("budget must be at least 1".into()));
        }
        if self.k == 0 {
            return Err(Error::Config("k must be at least 1".into()));
        }
        if self.strategy.is_projection() {
            if let Some(b) = self.budget {
                if self.k >= b {
                    return Err(Error::Config(format!(
                        "projection needs k < budget, got k = {} and budget = {b}",
                        self.k
                    )));
                }
            }
        }
        if !(self.stop_theta >= 0.0) {
            return Err(Error::Config("stop_theta must be non-negative".into()));
        }
        if self.max_steps == 0 {
            return Err(Error::Config("max_steps must be at least 1".into()));
        }
        if !(self.ridge >= 0.0 && self.ridge.is_finite()) {
            return Err(Error::Config("ridge must be non-negative".into()));
        }
        if self.norm_refresh_every == 0 {
            return Err(Error::Config(
                "norm_refresh_every must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MaintenanceEvent {
    pub strategy: BudgetStrategy,
    /// Support position of the discarded term.
    pub removed_position: usize,
    /// Dataset index that introduced the discarded term.
    pub removed_index: usize,
    pub removed_alpha_abs: f64,
    /// How many times the discarded term's coefficient had been incremented.
    pub removed_update_count: u64,
}

/// State after step `t`, i.e. describing `w_{t+1}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub t: usize,
    pub sampled_index: usize,
    /// Coefficient applied to `φ(x_{n_t})`: `C/t` or 0.
    pub alpha_t: f64,
    /// Dataset index of the support term credited with `alpha_t`. Differs
    /// from `sampled_index` only when two samples share coordinates.
    pub credited_index: Option<usize>,
    pub support_size: usize,
    /// `Σ |αᵢ|`.
    pub s_t: f64,
    pub w_norm: f64,
    /// `‖w_{t+1} - w_t‖` of the gradient step (before maintenance).
    pub step_delta: f64,
    pub maintenance: Option<MaintenanceEvent>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainTrace {
    pub records: Vec<StepRecord>,
    /// Increment count of each live support term, keyed by dataset index.
    pub update_counts: BTreeMap<usize, u64>,
}

impl TrainTrace {
    pub fn steps(&self) -> usize {
        self.records.len()
    }

    pub fn maintenance_events(&self) -> impl Iterator<Item = (&StepRecord, &MaintenanceEvent)> {
        self.records
            .iter()
            .filter_map(|r| r.maintenance.as_ref().map(|m| (r, m)))
    }

    /// One JSON object per line, one line per step.
    pub fn write_jsonl(&self, mut w: impl Write) -> Result<()> {
        for r in &self.records {
            serde_json::to_writer(&mut w, r)?;
            w.write_all(b"\n")?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads records written by [`TrainTrace::write_jsonl`] and rebuilds
    /// `update_counts` by replaying them.
    pub fn read_jsonl(r: impl BufRead) -> Result<Self> {
        let mut trace = TrainTrace::default();
        for (i, line) in r.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let record: StepRecord = serde_json::from_str(&line).map_err(|e| Error::Parse {
                line: i as u64 + 1,
                message: e.to_string(),
            })?;
            trace.replay(&record);
            trace.records.push(record);
        }
        Ok(trace)
    }

    fn replay(&mut self, record: &StepRecord) {
        if let Some(ev) = &record.maintenance {
            self.update_counts.remove(&ev.removed_index);
        }
        if let Some(idx) = record.credited_index {
            if record.maintenance.as_ref().map(|m| m.removed_index) != Some(idx) {
                *self.update_counts.entry(idx).or_default() += 1;
            }
        }
    }
}

pub struct TrainOutput {
    /// The last iterate `w_{T+1}`.
    pub model: KernelExpansion,
    pub trace: TrainTrace,
    /// `w̄_T`, when [`TrainConfig::track_average`] is set.
    pub average: Option<KernelExpansion>,
}

/// `J(w) = ½‖w‖² + (C/N) Σᵢ max{0, 1 - wᵀφ(xᵢ)}`.
pub fn objective(model: &KernelExpansion, data: &Dataset, c: f64) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::InvalidInput("objective of an empty dataset".into()));
    }
    if data.dim() != model.dim() {
        return Err(dim_mismatch(model.dim(), data.dim()));
    }
    let hinge: f64 = data
        .points()
        .map(|x| (1.0 - model.margin_unchecked(x)).max(0.0))
        .sum();
    Ok(0.5 * model.exact_norm_sq() + c * hinge / data.len() as f64)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepOutcome {
    pub sampled_index: usize,
    pub alpha_t: f64,
    /// `w_tᵀφ(x_{n_t})` before the update.
    pub margin: f64,
    pub step_delta: f64,
    pub placement: Option<crate::kernel::Placement>,
}

/// One SGD step from `w_t` to `w_{t+1}`.
pub fn sgd_step(
    model: &mut KernelExpansion,
    data: &Dataset,
    t: usize,
    c: f64,
    rng: &mut impl Rng,
) -> Result<StepOutcome> {
    if t == 0 {
        return Err(Error::InvalidInput("steps are numbered from 1".into()));
    }
    if data.dim() != model.dim() {
        return Err(dim_mismatch(model.dim(), data.dim()));
    }
    let n = rng.random_range(0..data.len());
    let x = data.point(n);
    let tf = t as f64;
    let margin = model.margin_unchecked(x);
    let norm_sq = model.norm_sq();
    let shrink = (tf - 1.0) / tf;
    model.scale_coefficients(shrink);

    if margin < 1.0 {
        let alpha = c / tf;
        let k_xx = model.kernel().eval_unchecked(x, x);
        let placement = model.add_term_scored(x, alpha, shrink * margin, k_xx);
        let delta_sq = norm_sq / (tf * tf) - 2.0 * alpha * margin / tf + alpha * alpha * k_xx;
        Ok(StepOutcome {
            sampled_index: n,
            alpha_t: alpha,
            margin,
            step_delta: delta_sq.max(0.0).sqrt(),
            placement: Some(placement),
        })
    } else {
        Ok(StepOutcome {
            sampled_index: n,
            alpha_t: 0.0,
            margin,
            step_delta: norm_sq.sqrt() / tf,
            placement: None,
        })
    }
}

/// Position minimizing `|αᵢ|·K(xᵢ, xᵢ)`; ties go to the lowest position.
pub fn select_redundant(model: &KernelExpansion) -> Result<usize> {
    let kernel = model.kernel();
    model
        .support()
        .iter()
        .map(|t| t.alpha.abs() * kernel.eval_unchecked(&t.x, &t.x))
        .enumerate()
        .fold(None, |best: Option<(usize, f64)>, (i, v)| match best {
            Some((_, b)) if b <= v => best,
            _ => Some((i, v)),
        })
        .map(|(i, _)| i)
        .ok_or_else(|| Error::InvalidState("cannot select from an empty support".into()))
}

/// Drops the most redundant term. Returns its former position.
pub fn maintain_removal(model: &mut KernelExpansion) -> Result<usize> {
    let p = select_redundant(model)?;
    model.remove_term(p)?;
    Ok(p)
}

/// Solves `(gram + ridge·I) d = cross`, the normal equations of projecting
/// `φ(x_p)` onto the span of the neighbors' feature vectors.
pub fn solve_projection_coeffs(gram: &[Vec<f64>], cross: &[f64], ridge: f64) -> Result<Vec<f64>> {
    let k = cross.len();
    if k == 0 || gram.len() != k || gram.iter().any(|row| row.len() != k) {
        return Err(Error::InvalidInput(format!(
            "projection system must be k×k with a k-vector right-hand side (k = {k})"
        )));
    }
    if !(ridge >= 0.0) {
        return Err(Error::InvalidInput("ridge must be non-negative".into()));
    }
    let a = DMatrix::from_fn(k, k, |i, j| gram[i][j] + if i == j { ridge } else { 0.0 });
    let singular = || {
        Error::Numerical(format!(
            "projection Gram matrix is singular at ridge {ridge}; retry with a positive ridge"
        ))
    };
    let chol = a.clone().cholesky().ok_or_else(singular)?;
    let l = chol.l_dirty();
    let max_diag = (0..k).map(|i| a[(i, i)]).fold(0.0, f64::max);
    let min_pivot = (0..k)
        .map(|i| l[(i, i)] * l[(i, i)])
        .fold(f64::INFINITY, f64::min);
    if !(min_pivot > 1e-14 * max_diag) {
        return Err(singular());
    }
    let d = chol.solve(&DVector::from_column_slice(cross));
    if d.iter().any(|v| !v.is_finite()) {
        return Err(singular());
    }
    Ok(d.iter().copied().collect())
}

/// Projects the term at `p` onto the span of `neighbors`, folds the projection
/// into their coefficients and removes `p`. Neighbor positions refer to the
/// support before removal.
pub fn project_and_remove(
    model: &mut KernelExpansion,
    p: usize,
    neighbors: &[usize],
    ridge: f64,
) -> Result<()> {
    let len = model.len();
    if p >= len || neighbors.iter().any(|&i| i >= len || i == p) {
        return Err(Error::InvalidInput(
            "neighbor set must index the support and exclude p".into(),
        ));
    }
    let kernel = *model.kernel();
    let support = model.support();
    let xp = &support[p].x;
    let alpha_p = support[p].alpha;
    if alpha_p != 0.0 {
        let gram: Vec<Vec<f64>> = neighbors
            .iter()
            .map(|&i| {
                neighbors
                    .iter()
                    .map(|&j| kernel.eval_unchecked(&support[i].x, &support[j].x))
                    .collect()
            })
            .collect();
        let cross: Vec<f64> = neighbors
            .iter()
            .map(|&i| kernel.eval_unchecked(&support[i].x, xp))
            .collect();
        let d = solve_projection_coeffs(&gram, &cross, ridge)?;
        for (&i, di) in neighbors.iter().zip(d) {
            model.increment_alpha(i, di * alpha_p)?;
        }
    }
    model.remove_term(p)?;
    Ok(())
}

/// The `k` support positions nearest to position `p` in input space (ties by
/// lowest position), or `k` distinct random positions other than `p`.
pub fn choose_neighbors(
    model: &KernelExpansion,
    p: usize,
    selector: NeighborSelector,
    k: usize,
    rng: &mut impl Rng,
) -> Result<Vec<usize>> {
    let len = model.len();
    if p >= len {
        return Err(Error::InvalidInput(format!(
            "support index {p} out of range ({len})"
        )));
    }
    if len < k + 1 {
        return Err(Error::InvalidState(format!(
            "projection onto {k} neighbors needs at least {} support vectors, have {len}",
            k + 1
        )));
    }
    let mut chosen: Vec<usize> = match selector {
        NeighborSelector::Knn => {
            let xp = &model.support()[p].x;
            let mut by_distance: Vec<(f64, usize)> = model
                .support()
                .iter()
                .enumerate()
                .filter(|&(i, _)| i != p)
                .map(|(i, t)| (squared_distance(&t.x, xp), i))
                .collect();
            by_distance.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            by_distance.into_iter().take(k).map(|(_, i)| i).collect()
        }
        NeighborSelector::Random => sample(rng, len - 1, k)
            .into_iter()
            .map(|i| if i >= p { i + 1 } else { i })
            .collect(),
    };
    chosen.sort_unstable();
    Ok(chosen)
}

/// Projection-based budget maintenance. Returns the removed position.
pub fn maintain_projection(
    model: &mut KernelExpansion,
    selector: NeighborSelector,
    k: usize,
    rng: &mut impl Rng,
    ridge: f64,
) -> Result<usize> {
    let p = select_redundant(model)?;
    let neighbors = choose_neighbors(model, p, selector, k, rng)?;
    project_and_remove(model, p, &neighbors, ridge)?;
    Ok(p)
}

/// Runs budgeted SGD until the step size drops to `stop_theta` or
/// `max_steps` steps have been taken.
pub fn train(data: &Dataset, config: &TrainConfig) -> Result<TrainOutput> {
    config.validate()?;
    if data.is_empty() {
        return Err(Error::InvalidInput(
            "cannot train on an empty dataset".into(),
        ));
    }
    let mut rng = stream_rng(config.seed, STREAM_TRAIN);
    Trainer::new(data, config).run(&mut rng)
}

struct Trainer<'a> {
    data: &'a Dataset,
    config: &'a TrainConfig,
    model: KernelExpansion,
    /// Dataset index that introduced each support term, aligned with the support.
    origins: Vec<usize>,
    counts: BTreeMap<usize, u64>,
    average_sum: Option<Vec<f64>>,
}

impl<'a> Trainer<'a> {
    fn new(data: &'a Dataset, config: &'a TrainConfig) -> Self {
        Self {
            data,
            config,
            model: KernelExpansion::new(config.kernel, data.dim())
                .with_norm_refresh(config.norm_refresh_every),
            origins: Vec::new(),
            counts: BTreeMap::new(),
            average_sum: config.track_average.then(|| vec![0.0; data.len()]),
        }
    }

    fn run(mut self, rng: &mut StreamRng) -> Result<TrainOutput> {
        let mut records = Vec::new();
        let mut steps = 0;
        for t in 1..=self.config.max_steps {
            if let Some(sum) = &mut self.average_sum {
                for (term, &origin) in self.model.support().iter().zip(&self.origins) {
                    sum[origin] += term.alpha;
                }
            }
            let record = self.step(t, rng)?;
            steps = t;
            let done = record.step_delta <= self.config.stop_theta;
            records.push(record);
            if done {
                break;
            }
        }
        let average = match self.average_sum {
            Some(sum) => {
                let terms = sum
                    .iter()
                    .enumerate()
                    .filter(|(_, a)| **a != 0.0)
                    .map(|(i, a)| crate::kernel::SupportTerm {
                        x: self.data.point(i).to_vec(),
                        alpha: a / steps as f64,
                    })
                    .collect();
                Some(KernelExpansion::from_terms(
                    self.config.kernel,
                    self.data.dim(),
                    terms,
                )?)
            }
            None => None,
        };
        Ok(TrainOutput {
            model: self.model,
            trace: TrainTrace {
                records,
                update_counts: self.counts,
            },
            average,
        })
    }

    fn step(&mut self, t: usize, rng: &mut StreamRng) -> Result<StepRecord> {
        let outcome = sgd_step(&mut self.model, self.data, t, self.config.c, rng)?;
        let mut credited_index = None;
        let mut maintenance = None;

        if let Some(placement) = outcome.placement {
            if placement.new_point {
                self.origins.push(outcome.sampled_index);
            }
            let origin = self.origins[placement.position];
            credited_index = Some(origin);
            *self.counts.entry(origin).or_default() += 1;

            if placement.new_point {
                if let Some(budget) = self.config.budget {
                    if self.model.len() > budget {
                        maintenance = Some(self.maintain(rng)?);
                    }
                }
            }
        }

        Ok(StepRecord {
            t,
            sampled_index: outcome.sampled_index,
            alpha_t: outcome.alpha_t,
            credited_index,
            support_size: self.model.len(),
            s_t: self.model.l1_norm(),
            w_norm: self.model.norm(),
            step_delta: outcome.step_delta,
            maintenance,
        })
    }

    fn maintain(&mut self, rng: &mut StreamRng) -> Result<MaintenanceEvent> {
        let p = select_redundant(&self.model)?;
        let removed_alpha_abs = self.model.support()[p].alpha.abs();
        let strategy = self.config.strategy;
        match strategy {
            BudgetStrategy::Removal => {
                self.model.remove_term(p)?;
            }
            BudgetStrategy::ProjectionKnn | BudgetStrategy::ProjectionRandom => {
                let selector = if strategy == BudgetStrategy::ProjectionKnn {
                    NeighborSelector::Knn
                } else {
                    NeighborSelector::Random
                };
                let neighbors = choose_neighbors(&self.model, p, selector, self.config.k, rng)?;
                project_and_remove(&mut self.model, p, &neighbors, self.config.ridge)?;
            }
        }
        let removed_index = self.origins.remove(p);
        let removed_update_count = self.counts.remove(&removed_index).unwrap_or(0);
        Ok(MaintenanceEvent {
            strategy,
            removed_position: p,
            removed_index,
            removed_alpha_abs,
            removed_update_count,
        })
    }
}
