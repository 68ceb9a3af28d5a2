//! Cluster assignment from a trained model.
//!
//! For the Gaussian kernel, stationary points of the decision function
//! `f(x) = Σ αᵢ K(xᵢ, x) - 1` are fixed points of the weighted-mean map
//!
//! ```text
//! P(x) = Σ αᵢ e^{-γ‖x-xᵢ‖²} xᵢ / Σ αᵢ e^{-γ‖x-xᵢ‖²}
//! ```
//!
//! Trajectories `x ← P(x)` started from the training points in the extended
//! boundary `B_ε = {xᵢ : |f(xᵢ)| ≤ ε}` collapse onto a few equilibrium points.
//! Only those equilibria are tested for pairwise connectivity, and every
//! training point inherits the label of its equilibrium or of its nearest
//! boundary point.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{dim_mismatch, Error, Result};
use crate::kernel::{squared_distance, KernelExpansion};

/// Denominators of `P` smaller than this in magnitude are treated as zero.
pub const DENOMINATOR_FLOOR: f64 = 1e-300;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AssignConfig {
    pub epsilon: f64,
    pub fp_tol: f64,
    pub fp_max_iter: usize,
    pub merge_tol: f64,
    pub m_samples: usize,
}

impl Default for AssignConfig {
    fn default() -> Self {
        Self {
            epsilon: 0.1,
            fp_tol: 1e-6,
            fp_max_iter: 500,
            merge_tol: 1e-3,
            m_samples: 20,
        }
    }
}

impl AssignConfig {
    pub fn with_epsilon(epsilon: f64) -> Self {
        Self {
            epsilon,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon >= 0.0) {
            return Err(Error::Config(format!(
                "epsilon must be non-negative, got {}",
                self.epsilon
            )));
        }
        if !(self.fp_tol > 0.0 && self.merge_tol > 0.0) {
            return Err(Error::Config(
                "fp_tol and merge_tol must be positive".into(),
            ));
        }
        if self.fp_max_iter == 0 || self.m_samples == 0 {
            return Err(Error::Config(
                "fp_max_iter and m_samples must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// The weighted-mean map `P(x)`.
pub fn fixed_point_map(model: &KernelExpansion, x: &[f64]) -> Result<Vec<f64>> {
    if model.is_empty() {
        return Err(Error::InvalidInput(
            "fixed-point map of an empty model".into(),
        ));
    }
    if x.len() != model.dim() {
        return Err(dim_mismatch(model.dim(), x.len()));
    }
    let gamma = model.kernel().gamma();
    let d2: Vec<f64> = model
        .support()
        .iter()
        .map(|t| squared_distance(&t.x, x))
        .collect();
    // P is a ratio, so a common factor e^{γ·min d²} cancels; factoring it out
    // keeps far-away points from underflowing to 0/0.
    let shift = d2.iter().copied().fold(f64::INFINITY, f64::min);
    let mut num = vec![0.0; x.len()];
    let mut den = 0.0;
    for (term, d) in model.support().iter().zip(&d2) {
        let w = term.alpha * (-gamma * (d - shift)).exp();
        den += w;
        for (n, xi) in num.iter_mut().zip(&term.x) {
            *n += w * xi;
        }
    }
    if !(den.abs() >= DENOMINATOR_FLOOR) {
        return Err(Error::DegeneratePoint(format!(
            "fixed-point denominator {den:e} vanishes at {x:?}"
        )));
    }
    Ok(num.into_iter().map(|n| n / den).collect())
}

/// `∇f(x) = 2γ Σ αᵢ (xᵢ - x) e^{-γ‖x-xᵢ‖²}`.
pub fn decision_gradient(model: &KernelExpansion, x: &[f64]) -> Result<Vec<f64>> {
    if x.len() != model.dim() {
        return Err(dim_mismatch(model.dim(), x.len()));
    }
    let gamma = model.kernel().gamma();
    let mut g = vec![0.0; x.len()];
    for term in model.support() {
        let w = 2.0 * gamma * term.alpha * (-gamma * squared_distance(&term.x, x)).exp();
        for ((gj, xi), xj) in g.iter_mut().zip(&term.x).zip(x) {
            *gj += w * (xi - xj);
        }
    }
    Ok(g)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Equilibrium {
    pub point: Vec<f64>,
    /// `true` when `‖P(point) - point‖ ≤ fp_tol` was reached.
    pub converged: bool,
    pub iterations: usize,
}

/// Iterates `x ← P(x)` from `x0`.
///
/// The returned point is the last iterate whose map residual was checked, so
/// a converged result satisfies `‖P(x*) - x*‖ ≤ fp_tol`. If the map becomes
/// undefined along the way, the trajectory restarts once from the nearest
/// support vector with a positive coefficient; failing that, the current
/// iterate is returned unconverged.
pub fn find_equilibrium(
    model: &KernelExpansion,
    x0: &[f64],
    cfg: &AssignConfig,
) -> Result<Equilibrium> {
    if x0.len() != model.dim() {
        return Err(dim_mismatch(model.dim(), x0.len()));
    }
    let mut x = x0.to_vec();
    let mut restarted = false;
    let mut iterations = 0;
    while iterations < cfg.fp_max_iter {
        let next = match fixed_point_map(model, &x) {
            Ok(p) => p,
            Err(Error::DegeneratePoint(_)) if !restarted => {
                restarted = true;
                match nearest_positive_support(model, &x) {
                    Some(sv) => {
                        x = sv;
                        continue;
                    }
                    None => break,
                }
            }
            Err(Error::DegeneratePoint(_)) => break,
            Err(e) => return Err(e),
        };
        iterations += 1;
        if squared_distance(&next, &x).sqrt() <= cfg.fp_tol {
            return Ok(Equilibrium {
                point: x,
                converged: true,
                iterations,
            });
        }
        x = next;
    }
    Ok(Equilibrium {
        point: x,
        converged: false,
        iterations,
    })
}

fn nearest_positive_support(model: &KernelExpansion, x: &[f64]) -> Option<Vec<f64>> {
    model
        .support()
        .iter()
        .filter(|t| t.alpha > 0.0)
        .map(|t| (squared_distance(&t.x, x), t))
        .min_by(|a, b| a.0.total_cmp(&b.0))
        .map(|(_, t)| t.x.clone())
}

/// Indices `i` with `|f(xᵢ)| ≤ ε`.
pub fn extended_boundary(
    model: &KernelExpansion,
    data: &Dataset,
    epsilon: f64,
) -> Result<Vec<usize>> {
    if data.dim() != model.dim() {
        return Err(dim_mismatch(model.dim(), data.dim()));
    }
    Ok(data
        .points()
        .enumerate()
        .filter(|(_, x)| (model.margin_unchecked(x) - model.rho()).abs() <= epsilon)
        .map(|(i, _)| i)
        .collect())
}

/// The `q`-quantile of `|f(xᵢ)|` over the dataset, a starting point for
/// choosing ε (the default `q = 0.1` puts about a tenth of the points in
/// the extended boundary).
pub fn suggest_epsilon(model: &KernelExpansion, data: &Dataset, q: f64) -> Result<f64> {
    if data.dim() != model.dim() {
        return Err(dim_mismatch(model.dim(), data.dim()));
    }
    if !(0.0..=1.0).contains(&q) {
        return Err(Error::InvalidInput(format!(
            "quantile must lie in [0, 1], got {q}"
        )));
    }
    let mut v: Vec<f64> = data
        .points()
        .map(|x| (model.margin_unchecked(x) - model.rho()).abs())
        .collect();
    v.sort_by(f64::total_cmp);
    let idx = ((v.len() - 1) as f64 * q).round() as usize;
    Ok(v[idx])
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dedup {
    pub representatives: Vec<Vec<f64>>,
    /// Representative index for each input point, in input order.
    pub assignment: Vec<usize>,
}

/// Greedy first-come merging: each point joins the first representative within
/// `merge_tol`, otherwise it becomes a new representative.
pub fn dedup_equilibria(points: &[Equilibrium], merge_tol: f64) -> Dedup {
    let mut representatives: Vec<Vec<f64>> = Vec::new();
    let tol_sq = merge_tol * merge_tol;
    let assignment = points
        .iter()
        .map(|e| {
            match representatives
                .iter()
                .position(|r| squared_distance(r, &e.point) <= tol_sq)
            {
                Some(i) => i,
                None => {
                    representatives.push(e.point.clone());
                    representatives.len() - 1
                }
            }
        })
        .collect();
    Dedup {
        representatives,
        assignment,
    }
}

/// Sample-point test: `true` iff `f ≥ 0` at the `m` interior points
/// `a + j/(m+1)·(b - a)`, `j = 1..m`. Symmetric in `a` and `b` bit for bit.
pub fn segment_connected(
    model: &KernelExpansion,
    a: &[f64],
    b: &[f64],
    m_samples: usize,
) -> Result<bool> {
    if a.len() != model.dim() || b.len() != model.dim() {
        return Err(dim_mismatch(
            model.dim(),
            if a.len() != model.dim() {
                a.len()
            } else {
                b.len()
            },
        ));
    }
    let inside = |x: &[f64]| model.margin_unchecked(x) - model.rho() >= 0.0;
    if a == b {
        return Ok(inside(a));
    }
    let (a, b) = if lexicographic_le(a, b) {
        (a, b)
    } else {
        (b, a)
    };
    let steps = (m_samples + 1) as f64;
    let mut x = vec![0.0; a.len()];
    for j in 1..=m_samples {
        let s = j as f64 / steps;
        for ((xi, ai), bi) in x.iter_mut().zip(a).zip(b) {
            *xi = (1.0 - s) * ai + s * bi;
        }
        if !inside(&x) {
            return Ok(false);
        }
    }
    Ok(true)
}

fn lexicographic_le(a: &[f64], b: &[f64]) -> bool {
    for (x, y) in a.iter().zip(b) {
        match x.total_cmp(y) {
            std::cmp::Ordering::Less => return true,
            std::cmp::Ordering::Greater => return false,
            std::cmp::Ordering::Equal => {}
        }
    }
    true
}

/// Connected-component ids of a symmetric boolean adjacency matrix, numbered
/// by first appearance in vertex order.
pub fn connected_components(adjacency: &[Vec<bool>]) -> Vec<usize> {
    let n = adjacency.len();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut [usize], mut i: usize) -> usize {
        while parent[i] != i {
            parent[i] = parent[parent[i]];
            i = parent[i];
        }
        i
    }
    for (i, row) in adjacency.iter().enumerate() {
        for (j, &linked) in row.iter().enumerate().skip(i + 1) {
            if linked {
                let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
                if ri != rj {
                    parent[ri.max(rj)] = ri.min(rj);
                }
            }
        }
    }
    let mut ids = vec![usize::MAX; n];
    let mut next = 0;
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let root = find(&mut parent, i);
        if ids[root] == usize::MAX {
            ids[root] = next;
            next += 1;
        }
        labels.push(ids[root]);
    }
    labels
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClusterSolution {
    pub labels: Vec<usize>,
    pub num_clusters: usize,
    pub epsilon: f64,
    pub equilibria: Vec<Vec<f64>>,
    /// Whether the trajectory that founded each equilibrium converged.
    pub equilibrium_converged: Vec<bool>,
    pub equilibrium_labels: Vec<usize>,
    /// Indices of `B_ε`, ascending.
    pub boundary_members: Vec<usize>,
    /// Equilibrium index reached from each member of `B_ε`.
    pub boundary_equilibrium: Vec<usize>,
    pub adjacency: Vec<Vec<bool>>,
}

impl ClusterSolution {
    pub fn num_equilibria(&self) -> usize {
        self.equilibria.len()
    }

    /// `point_index,cluster_id,in_boundary` rows with a header.
    pub fn write_labels_csv(&self, mut w: impl Write) -> Result<()> {
        let mut in_boundary = vec![false; self.labels.len()];
        for &i in &self.boundary_members {
            in_boundary[i] = true;
        }
        writeln!(w, "point_index,cluster_id,in_boundary")?;
        for (i, l) in self.labels.iter().enumerate() {
            writeln!(w, "{i},{l},{}", u8::from(in_boundary[i]))?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn sidecar(&self) -> Sidecar {
        Sidecar {
            m: self.equilibria.len(),
            num_clusters: self.num_clusters,
            epsilon: self.epsilon,
            boundary_size: self.boundary_members.len(),
            equilibria: self.equilibria.clone(),
            equilibrium_converged: self.equilibrium_converged.clone(),
            equilibrium_labels: self.equilibrium_labels.clone(),
            adjacency: self.adjacency.clone(),
        }
    }
}

/// JSON summary written next to the labels CSV.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sidecar {
    #[serde(rename = "M")]
    pub m: usize,
    pub num_clusters: usize,
    pub epsilon: f64,
    pub boundary_size: usize,
    pub equilibria: Vec<Vec<f64>>,
    pub equilibrium_converged: Vec<bool>,
    pub equilibrium_labels: Vec<usize>,
    pub adjacency: Vec<Vec<bool>>,
}

/// Reads the `cluster_id` column of a labels CSV.
pub fn read_labels_csv(r: impl std::io::Read) -> Result<Vec<usize>> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(r);
    let headers = rdr
        .headers()
        .map_err(|e| Error::Parse {
            line: 1,
            message: e.to_string(),
        })?
        .clone();
    let col = headers
        .iter()
        .position(|h| h == "cluster_id")
        .ok_or_else(|| Error::Parse {
            line: 1,
            message: "missing cluster_id column".into(),
        })?;
    let mut labels = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| Error::Parse {
            line: e.position().map_or(0, |p| p.line()),
            message: e.to_string(),
        })?;
        let line = rec.position().map_or(0, |p| p.line());
        let v = rec.get(col).unwrap_or_default();
        labels.push(v.parse().map_err(|_| Error::Parse {
            line,
            message: format!("invalid cluster id {v:?}"),
        })?);
    }
    Ok(labels)
}

pub fn assign_clusters(
    model: &KernelExpansion,
    data: &Dataset,
    cfg: &AssignConfig,
) -> Result<ClusterSolution> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::InvalidInput(
            "cannot cluster an empty dataset".into(),
        ));
    }
    if model.is_empty() {
        return Err(Error::InvalidInput(
            "cannot cluster with an empty model".into(),
        ));
    }
    let boundary = extended_boundary(model, data, cfg.epsilon)?;
    if boundary.is_empty() {
        return Ok(ClusterSolution {
            labels: vec![0; data.len()],
            num_clusters: 1,
            epsilon: cfg.epsilon,
            equilibria: Vec::new(),
            equilibrium_converged: Vec::new(),
            equilibrium_labels: Vec::new(),
            boundary_members: Vec::new(),
            boundary_equilibrium: Vec::new(),
            adjacency: Vec::new(),
        });
    }

    let trajectories = boundary
        .iter()
        .map(|&i| find_equilibrium(model, data.point(i), cfg))
        .collect::<Result<Vec<_>>>()?;
    let dedup = dedup_equilibria(&trajectories, cfg.merge_tol);
    let mut equilibrium_converged = vec![false; dedup.representatives.len()];
    let mut seen = vec![false; dedup.representatives.len()];
    for (traj, &rep) in trajectories.iter().zip(&dedup.assignment) {
        if !seen[rep] {
            seen[rep] = true;
            equilibrium_converged[rep] = traj.converged;
        }
    }

    let reps = &dedup.representatives;
    let m = reps.len();
    let mut adjacency = vec![vec![false; m]; m];
    for i in 0..m {
        adjacency[i][i] = true;
        for j in i + 1..m {
            let linked = segment_connected(model, &reps[i], &reps[j], cfg.m_samples)?;
            adjacency[i][j] = linked;
            adjacency[j][i] = linked;
        }
    }
    let equilibrium_labels = connected_components(&adjacency);
    let num_clusters = equilibrium_labels.iter().max().map_or(0, |l| l + 1);

    let mut labels = vec![usize::MAX; data.len()];
    for (&i, &rep) in boundary.iter().zip(&dedup.assignment) {
        labels[i] = equilibrium_labels[rep];
    }
    for i in 0..data.len() {
        if labels[i] != usize::MAX {
            continue;
        }
        let x = data.point(i);
        let nearest = boundary
            .iter()
            .map(|&b| (squared_distance(data.point(b), x), b))
            .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)))
            .map(|(_, b)| b)
            .expect("boundary is non-empty");
        labels[i] = labels[nearest];
    }

    Ok(ClusterSolution {
        labels,
        num_clusters,
        epsilon: cfg.epsilon,
        equilibria: dedup.representatives,
        equilibrium_converged,
        equilibrium_labels,
        boundary_members: boundary,
        boundary_equilibrium: dedup.assignment,
        adjacency,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::{KernelSpec, SupportTerm};

    fn model(gamma: f64, terms: &[(&[f64], f64)]) -> KernelExpansion {
        let dim = terms[0].0.len();
        let terms = terms
            .iter()
            .map(|(x, a)| SupportTerm {
                x: x.to_vec(),
                alpha: *a,
            })
            .collect();
        KernelExpansion::from_terms(KernelSpec::rbf(gamma).unwrap(), dim, terms).unwrap()
    }

    fn eq(point: Vec<f64>) -> Equilibrium {
        Equilibrium {
            point,
            converged: true,
            iterations: 1,
        }
    }

    #[test]
    fn map_of_single_vector_is_constant() {
        let m = model(1.0, &[(&[2.0, -1.0], 0.7)]);
        for x in [[0.0, 0.0], [5.0, 5.0], [2.0, -1.0]] {
            assert_eq!(fixed_point_map(&m, &x).unwrap(), vec![2.0, -1.0]);
        }
    }

    #[test]
    fn symmetric_pair_fixes_the_midpoint() {
        let m = model(0.5, &[(&[-1.5], 1.0), (&[1.5], 1.0)]);
        assert_eq!(fixed_point_map(&m, &[0.0]).unwrap(), vec![0.0]);
    }

    #[test]
    fn far_point_maps_to_kernel_weighted_mean() {
        let pts: [&[f64]; 3] = [&[0.0, 0.0], &[1.0, 0.0], &[0.0, 2.0]];
        let m = model(0.3, &[(pts[0], 0.4), (pts[1], 0.4), (pts[2], 0.4)]);
        let probe = [6.0, 7.0];
        let w: Vec<f64> = pts
            .iter()
            .map(|p| (-0.3 * squared_distance(p, &probe)).exp())
            .collect();
        let total: f64 = w.iter().sum();
        let expected: Vec<f64> = (0..2)
            .map(|j| pts.iter().zip(&w).map(|(p, wi)| wi * p[j]).sum::<f64>() / total)
            .collect();
        let got = fixed_point_map(&m, &probe).unwrap();
        for j in 0..2 {
            assert!((got[j] - expected[j]).abs() < 1e-12);
        }
    }

    #[test]
    fn cancelling_coefficients_are_degenerate() {
        let m = model(1.0, &[(&[-1.0], 1.0), (&[1.0], -1.0)]);
        assert!(matches!(
            fixed_point_map(&m, &[0.0]),
            Err(Error::DegeneratePoint(_))
        ));
        let empty = KernelExpansion::new(KernelSpec::rbf(1.0).unwrap(), 1);
        assert!(fixed_point_map(&empty, &[0.0]).is_err());
    }

    #[test]
    fn equilibrium_examples() {
        let cfg = AssignConfig::default();
        let single = model(1.0, &[(&[3.0, 4.0], 1.0)]);
        let e = find_equilibrium(&single, &[0.0, 0.0], &cfg).unwrap();
        assert_eq!(e.point, vec![3.0, 4.0]);
        assert!(e.converged);
        assert_eq!(e.iterations, 2);

        let pair = model(0.5, &[(&[-1.5], 1.0), (&[1.5], 1.0)]);
        let e = find_equilibrium(&pair, &[0.0], &cfg).unwrap();
        assert_eq!((e.point.clone(), e.iterations), (vec![0.0], 1));

        // Two Gaussian bumps; start inside the left one.
        let bumps = model(
            2.0,
            &[
                (&[0.0, 0.0], 0.6),
                (&[0.2, 0.1], 0.6),
                (&[4.0, 4.0], 0.6),
                (&[4.1, 3.9], 0.6),
            ],
        );
        let e = find_equilibrium(&bumps, &[0.5, -0.3], &cfg).unwrap();
        assert!(e.converged);
        let residual =
            squared_distance(&fixed_point_map(&bumps, &e.point).unwrap(), &e.point).sqrt();
        assert!(residual <= cfg.fp_tol);
        assert!(e.point[0].abs() < 0.5 && e.point[1].abs() < 0.5);
        let grad = decision_gradient(&bumps, &e.point).unwrap();
        assert!(grad.iter().all(|g| g.abs() < 1e-4));
    }

    #[test]
    fn degenerate_trajectory_restarts_from_a_positive_vector() {
        let m = model(1.0, &[(&[-1.0], 1.0), (&[1.0], -1.0), (&[5.0], 0.5)]);
        let e = find_equilibrium(&m, &[0.0], &AssignConfig::default()).unwrap();
        assert!(e.point.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn boundary_examples() {
        let data = Dataset::new("d", vec![vec![0.0], vec![0.5], vec![3.0]], None).unwrap();
        let m = model(1.0, &[(&[0.0], 1.0)]);
        assert_eq!(extended_boundary(&m, &data, 1e9).unwrap(), vec![0, 1, 2]);
        assert_eq!(extended_boundary(&m, &data, 0.0).unwrap(), vec![0]);
        let empty = KernelExpansion::new(KernelSpec::rbf(1.0).unwrap(), 1);
        assert!(extended_boundary(&empty, &data, 0.5).unwrap().is_empty());
    }

    #[test]
    fn dedup_examples() {
        let tol = 1e-3;
        let same = vec![eq(vec![1.0, 1.0]); 4];
        assert_eq!(dedup_equilibria(&same, tol).representatives.len(), 1);

        let far = vec![eq(vec![0.0]), eq(vec![10.0 * tol])];
        assert_eq!(dedup_equilibria(&far, tol).representatives.len(), 2);

        // p0, p1 within tol of p0; p2 is 1.8·tol from p0 so it founds a new
        // representative; p3 joins p2; p4 is 1.8·tol from p2.
        let chain: Vec<Equilibrium> = (0..5).map(|i| eq(vec![i as f64 * 0.9 * tol])).collect();
        let d = dedup_equilibria(&chain, tol);
        assert_eq!(
            d.representatives,
            vec![
                chain[0].point.clone(),
                chain[2].point.clone(),
                chain[4].point.clone()
            ]
        );
        assert_eq!(d.assignment, vec![0, 0, 1, 1, 2]);
    }

    #[test]
    fn segment_examples() {
        let bumps = model(4.0, &[(&[0.0, 0.0], 2.0), (&[3.0, 0.0], 2.0)]);
        assert!(!segment_connected(&bumps, &[0.0, 0.0], &[3.0, 0.0], 20).unwrap());
        assert!(segment_connected(&bumps, &[-0.1, 0.0], &[0.1, 0.05], 20).unwrap());
        assert!(segment_connected(&bumps, &[0.0, 0.0], &[0.0, 0.0], 20).unwrap());
        assert!(!segment_connected(&bumps, &[1.5, 0.0], &[1.5, 0.0], 20).unwrap());
        let empty = KernelExpansion::new(KernelSpec::rbf(1.0).unwrap(), 2);
        assert!(!segment_connected(&empty, &[0.0, 0.0], &[0.1, 0.0], 20).unwrap());
    }

    #[test]
    fn segment_samples_match_direct_evaluation() {
        let bumps = model(4.0, &[(&[0.0, 0.0], 2.0), (&[3.0, 0.0], 2.0)]);
        let (a, b) = ([0.0, 0.0], [3.0, 0.0]);
        let f: Vec<f64> = (1..=20)
            .map(|j| {
                let s = j as f64 / 21.0;
                let x = [a[0] + s * (b[0] - a[0]), a[1] + s * (b[1] - a[1])];
                bumps.decision_value(&x).unwrap()
            })
            .collect();
        assert!(f.iter().any(|v| *v < 0.0));
        assert_eq!(
            segment_connected(&bumps, &a, &b, 20).unwrap(),
            f.iter().all(|v| *v >= 0.0)
        );
    }

    #[test]
    fn components_by_first_appearance() {
        let t = true;
        let f = false;
        let adj = vec![
            vec![t, f, t, f],
            vec![f, t, f, f],
            vec![t, f, t, f],
            vec![f, f, f, t],
        ];
        assert_eq!(connected_components(&adj), vec![0, 1, 0, 2]);
    }

    #[test]
    fn two_blobs_give_two_clusters() {
        let mut pts = Vec::new();
        let mut terms = Vec::new();
        for (cx, cy) in [(0.0, 0.0), (5.0, 5.0)] {
            for k in 0..8 {
                let th = k as f64 * std::f64::consts::PI / 4.0;
                let p = vec![cx + 0.3 * th.cos(), cy + 0.3 * th.sin()];
                terms.push(SupportTerm {
                    x: p.clone(),
                    alpha: 0.25,
                });
                pts.push(p);
            }
            pts.push(vec![cx, cy]);
        }
        let m = KernelExpansion::from_terms(KernelSpec::rbf(2.0).unwrap(), 2, terms).unwrap();
        let data = Dataset::new("blobs", pts, None).unwrap();
        let sol = assign_clusters(&m, &data, &AssignConfig::with_epsilon(10.0)).unwrap();
        assert_eq!(sol.num_equilibria(), 2);
        assert_eq!(sol.adjacency, vec![vec![true, false], vec![false, true]]);
        assert_eq!(sol.num_clusters, 2);
        assert!(sol.labels[..9].iter().all(|&l| l == sol.labels[0]));
        assert!(sol.labels[9..].iter().all(|&l| l == sol.labels[9]));
        assert_ne!(sol.labels[0], sol.labels[9]);
    }

    #[test]
    fn empty_boundary_falls_back_to_one_cluster() {
        let m = model(1.0, &[(&[0.0], 3.0)]);
        let data = Dataset::new("d", vec![vec![0.1], vec![0.7], vec![2.0]], None).unwrap();
        let sol = assign_clusters(&m, &data, &AssignConfig::with_epsilon(0.0)).unwrap();
        assert_eq!(sol.labels, vec![0, 0, 0]);
        assert_eq!(sol.num_clusters, 1);
        assert!(sol.boundary_members.is_empty());
    }

    #[test]
    fn labels_csv_round_trip() {
        let m = model(1.0, &[(&[0.0], 1.5), (&[4.0], 1.5)]);
        let data =
            Dataset::new("d", vec![vec![0.0], vec![0.2], vec![4.0], vec![9.0]], None).unwrap();
        let sol = assign_clusters(&m, &data, &AssignConfig::with_epsilon(0.6)).unwrap();
        let mut buf = Vec::new();
        sol.write_labels_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("point_index,cluster_id,in_boundary\n"));
        assert_eq!(read_labels_csv(&buf[..]).unwrap(), sol.labels);
        let side = serde_json::to_value(sol.sidecar()).unwrap();
        assert_eq!(side["M"], sol.num_equilibria());
    }

    #[test]
    fn quantile_epsilon() {
        let m = model(1.0, &[(&[0.0], 1.0)]);
        let data =
            Dataset::new("d", (0..11).map(|i| vec![i as f64 * 0.1]).collect(), None).unwrap();
        assert_eq!(suggest_epsilon(&m, &data, 0.0).unwrap(), 0.0);
        let eps = suggest_epsilon(&m, &data, 0.1).unwrap();
        assert_eq!(extended_boundary(&m, &data, eps).unwrap(), vec![0, 1]);
    }
}
