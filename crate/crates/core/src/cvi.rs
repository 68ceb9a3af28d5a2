//! Clustering validity indices: compactness, purity, Rand index,
//! Davies–Bouldin index and normalized mutual information.
//!
//! Cluster and class ids are arbitrary non-negative integers; every index is
//! invariant under renaming them. Entropies use the natural logarithm.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::kernel::squared_distance;

fn groups(labels: &[usize]) -> BTreeMap<usize, Vec<usize>> {
    let mut g: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, &l) in labels.iter().enumerate() {
        g.entry(l).or_default().push(i);
    }
    g
}

fn check_lengths(data: &Dataset, predicted: &[usize]) -> Result<()> {
    if data.len() != predicted.len() {
        return Err(Error::InvalidInput(format!(
            "{} labels for {} points",
            predicted.len(),
            data.len()
        )));
    }
    Ok(())
}

fn check_truth<'a>(predicted: &[usize], truth: Option<&'a [usize]>) -> Result<&'a [usize]> {
    let truth =
        truth.ok_or_else(|| Error::InvalidInput("ground-truth labels are required".into()))?;
    if truth.len() != predicted.len() {
        return Err(Error::InvalidInput(format!(
            "{} predicted labels but {} truth labels",
            predicted.len(),
            truth.len()
        )));
    }
    Ok(truth)
}

/// Cluster-size weighted mean of the average intra-cluster pairwise distance.
/// Singleton clusters contribute 0.
pub fn compactness(data: &Dataset, predicted: &[usize]) -> Result<f64> {
    check_lengths(data, predicted)?;
    let mut total = 0.0;
    for members in groups(predicted).values() {
        let nk = members.len();
        if nk < 2 {
            continue;
        }
        let mut sum = 0.0;
        for (a, &i) in members.iter().enumerate() {
            for &j in &members[a + 1..] {
                sum += squared_distance(data.point(i), data.point(j)).sqrt();
            }
        }
        total += nk as f64 * sum / (nk * (nk - 1) / 2) as f64;
    }
    Ok(total / data.len() as f64)
}

/// Contingency counts `N_ij` keyed by (cluster, class).
fn contingency(predicted: &[usize], truth: &[usize]) -> BTreeMap<(usize, usize), u64> {
    let mut table = BTreeMap::new();
    for (&p, &t) in predicted.iter().zip(truth) {
        *table.entry((p, t)).or_insert(0u64) += 1;
    }
    table
}

/// `Σᵢ (Nᵢ/N)·maxⱼ (Nᵢⱼ/Nᵢ)`, i.e. the fraction of points that belong to the
/// majority class of their cluster.
pub fn purity(predicted: &[usize], truth: Option<&[usize]>) -> Result<f64> {
    let truth = check_truth(predicted, truth)?;
    if predicted.is_empty() {
        return Err(Error::InvalidInput("purity of an empty labeling".into()));
    }
    let mut majority: BTreeMap<usize, u64> = BTreeMap::new();
    for ((cluster, _), n) in contingency(predicted, truth) {
        let m = majority.entry(cluster).or_insert(0);
        *m = (*m).max(n);
    }
    Ok(majority.values().sum::<u64>() as f64 / predicted.len() as f64)
}

/// Pair-counting confusion: (TP, FP, TN, FN) over unordered pairs.
pub fn pair_counts(predicted: &[usize], truth: &[usize]) -> (u64, u64, u64, u64) {
    let pairs = |n: u64| n * n.saturating_sub(1) / 2;
    let n = predicted.len() as u64;
    let same_both: u64 = contingency(predicted, truth)
        .values()
        .map(|&c| pairs(c))
        .sum();
    let same_cluster: u64 = groups(predicted)
        .values()
        .map(|g| pairs(g.len() as u64))
        .sum();
    let same_class: u64 = groups(truth).values().map(|g| pairs(g.len() as u64)).sum();
    let tp = same_both;
    let fp = same_cluster - same_both;
    let fn_ = same_class - same_both;
    let tn = pairs(n) - tp - fp - fn_;
    (tp, fp, tn, fn_)
}

pub fn rand_index(predicted: &[usize], truth: Option<&[usize]>) -> Result<f64> {
    let truth = check_truth(predicted, truth)?;
    if predicted.len() < 2 {
        return Err(Error::InvalidInput(
            "Rand index needs at least two points".into(),
        ));
    }
    let (tp, fp, tn, fn_) = pair_counts(predicted, truth);
    Ok((tp + tn) as f64 / (tp + fp + tn + fn_) as f64)
}

/// `(1/m) Σᵢ maxⱼ≠ᵢ (Δᵢ + Δⱼ)/d(cᵢ, cⱼ)` with `Δ` the mean distance of a
/// cluster's members to its centroid and `d` the centroid distance.
pub fn davies_bouldin(data: &Dataset, predicted: &[usize]) -> Result<f64> {
    check_lengths(data, predicted)?;
    let groups = groups(predicted);
    if groups.len() < 2 {
        return Err(Error::DegenerateClustering(
            "Davies-Bouldin index needs at least two clusters".into(),
        ));
    }
    let d = data.dim();
    let stats: Vec<(Vec<f64>, f64)> = groups
        .values()
        .map(|members| {
            let mut c = vec![0.0; d];
            for &i in members {
                for (cj, xj) in c.iter_mut().zip(data.point(i)) {
                    *cj += xj;
                }
            }
            c.iter_mut().for_each(|v| *v /= members.len() as f64);
            let spread = members
                .iter()
                .map(|&i| squared_distance(data.point(i), &c).sqrt())
                .sum::<f64>()
                / members.len() as f64;
            (c, spread)
        })
        .collect();
    let mut total = 0.0;
    for (i, (ci, si)) in stats.iter().enumerate() {
        let mut worst = f64::NEG_INFINITY;
        for (j, (cj, sj)) in stats.iter().enumerate() {
            if i == j {
                continue;
            }
            let sep = squared_distance(ci, cj).sqrt();
            if sep == 0.0 {
                return Err(Error::DegenerateClustering(
                    "two clusters share a centroid".into(),
                ));
            }
            worst = worst.max((si + sj) / sep);
        }
        total += worst;
    }
    Ok(total / stats.len() as f64)
}

fn entropy(counts: impl Iterator<Item = u64>, n: f64) -> f64 {
    counts
        .filter(|&c| c > 0)
        .map(|c| {
            let p = c as f64 / n;
            -p * p.ln()
        })
        .sum()
}

/// `I(Ω, C) / ((H(Ω) + H(C))/2)`; defined as 1 when both entropies vanish.
pub fn nmi(predicted: &[usize], truth: Option<&[usize]>) -> Result<f64> {
    let truth = check_truth(predicted, truth)?;
    if predicted.is_empty() {
        return Err(Error::InvalidInput("NMI of an empty labeling".into()));
    }
    let n = predicted.len() as f64;
    let clusters = groups(predicted);
    let classes = groups(truth);
    let h_omega = entropy(clusters.values().map(|g| g.len() as u64), n);
    let h_c = entropy(classes.values().map(|g| g.len() as u64), n);
    if h_omega + h_c == 0.0 {
        return Ok(1.0);
    }
    let mut mi = 0.0;
    for ((k, j), nkj) in contingency(predicted, truth) {
        let pkj = nkj as f64 / n;
        let pk = clusters[&k].len() as f64 / n;
        let pj = classes[&j].len() as f64 / n;
        mi += pkj * (pkj / (pk * pj)).ln();
    }
    Ok((mi / ((h_omega + h_c) / 2.0)).clamp(0.0, 1.0))
}

/// All five indices; the truth-based ones are `None` without ground truth and
/// the Davies–Bouldin index is `None` when it is undefined (fewer than two
/// clusters or coincident centroids).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CviReport {
    pub compactness: f64,
    pub purity: Option<f64>,
    pub rand: Option<f64>,
    pub dbi: Option<f64>,
    pub nmi: Option<f64>,
}

pub fn report(data: &Dataset, predicted: &[usize], truth: Option<&[usize]>) -> Result<CviReport> {
    check_lengths(data, predicted)?;
    let compactness = compactness(data, predicted)?;
    let dbi = match davies_bouldin(data, predicted) {
        Ok(v) => Some(v),
        Err(Error::DegenerateClustering(_)) => None,
        Err(e) => return Err(e),
    };
    let (purity, rand, nmi) = match truth {
        Some(t) => (
            Some(purity(predicted, Some(t))?),
            if predicted.len() >= 2 {
                Some(rand_index(predicted, Some(t))?)
            } else {
                None
            },
            Some(nmi(predicted, Some(t))?),
        ),
        None => (None, None, None),
    };
    Ok(CviReport {
        compactness,
        purity,
        rand,
        dbi,
        nmi,
    })
}
