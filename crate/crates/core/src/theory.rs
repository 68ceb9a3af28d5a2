//! Computable forms of the convergence analysis for budgeted SGD with the
//! removal strategy, and an auditor that checks a [`TrainTrace`] against them.
//!
//! With `R` bounding `‖φ(x)‖`, `C` the trade-off and `m` the largest number of
//! times any removed vector had been updated:
//!
//! * `s_t = Σ|αᵢ| ≤ C·R` and `‖w_t‖ ≤ C·R²` at every step,
//! * a removed coefficient satisfies `|α_{p_t}| ≤ m·C·R/t`,
//! * gradients are bounded by `G = CR + CR²`, maintenance perturbations by
//!   `H = mCR²`, and the distance to the optimum by
//!   `W = H + √(H² + (G+H)²)`,
//! * the averaged objective gap after `T` steps is at most
//!   `(G+H)²(log T + 1)/(2T) + (W·R/T)·Σ_t P(Z_t=1)·E[ρ_{p_t}²]^{1/2}`.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::trainer::{BudgetStrategy, TrainTrace};

/// Relative slack applied when comparing observed values to a bound, to
/// absorb floating-point rounding in sums that meet the bound with equality.
pub const BOUND_SLACK: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundSet {
    pub r: f64,
    pub g: f64,
    pub h: f64,
    pub w: f64,
    pub m: u64,
}

pub fn compute_bounds(c: f64, r: f64, m: u64) -> Result<BoundSet> {
    if !(c > 0.0 && r > 0.0 && m > 0) {
        return Err(Error::InvalidInput(format!(
            "bounds need positive C, R and m (got C = {c}, R = {r}, m = {m})"
        )));
    }
    let g = c * r + c * r * r;
    let h = m as f64 * c * r * r;
    let w = h + (h * h + (g + h) * (g + h)).sqrt();
    Ok(BoundSet { r, g, h, w, m })
}

/// Right-hand side of the regret bound after `t_total` steps.
///
/// `maintenance_terms` holds one value of `P(Z_t=1)·E[ρ_{p_t}²]^{1/2}` per
/// step (or only the non-zero ones; the sum is all that matters).
pub fn regret_bound(t_total: u64, bounds: &BoundSet, maintenance_terms: &[f64]) -> Result<f64> {
    if t_total == 0 {
        return Err(Error::InvalidInput("regret bound needs T ≥ 1".into()));
    }
    if maintenance_terms.iter().any(|v| !(*v >= 0.0)) {
        return Err(Error::InvalidInput(
            "maintenance terms must be non-negative".into(),
        ));
    }
    let t = t_total as f64;
    let gh = bounds.g + bounds.h;
    let base = gh * gh * (t.ln() + 1.0) / (2.0 * t);
    let penalty = bounds.w * bounds.r / t * maintenance_terms.iter().sum::<f64>();
    Ok(base + penalty)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub step: usize,
    pub observed: f64,
    pub bound: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegretPoint {
    pub t: usize,
    pub bound: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub strategy: BudgetStrategy,
    pub steps: usize,
    /// `false` for projection strategies, whose traces are not covered by the
    /// removal-case lemmas.
    pub lemmas_checked: bool,
    pub lemma1_violations: Vec<Violation>,
    pub lemma2_violations: Vec<Violation>,
    pub lemma4_violations: Vec<Violation>,
    pub maintenance_events: usize,
    /// Fraction of steps that ran budget maintenance.
    pub maintenance_rate: f64,
    /// Largest observed update count of any support term (at least 1).
    pub max_update_count: u64,
    pub bounds: BoundSet,
    /// `Σ_t Z_t·|ρ_{p_t}|` with the realized `|ρ_{p_t}| = t·|α_{p_t}|`,
    /// standing in for the unobservable expectation in the regret bound.
    pub realized_maintenance_sum: f64,
    /// Regret bound evaluated at log-spaced horizons, using the realized
    /// maintenance terms up to each horizon.
    pub regret_curve: Vec<RegretPoint>,
}

impl AuditReport {
    pub fn violation_count(&self) -> usize {
        self.lemma1_violations.len() + self.lemma2_violations.len() + self.lemma4_violations.len()
    }

    pub fn is_clean(&self) -> bool {
        self.violation_count() == 0
    }
}

fn exceeds(observed: f64, bound: f64) -> bool {
    !(observed <= bound * (1.0 + BOUND_SLACK) + f64::MIN_POSITIVE)
}

pub fn audit_trace(
    trace: &TrainTrace,
    c: f64,
    r: f64,
    strategy: BudgetStrategy,
) -> Result<AuditReport> {
    if !(c > 0.0 && r > 0.0) {
        return Err(Error::InvalidInput("audit needs positive C and R".into()));
    }
    for (i, rec) in trace.records.iter().enumerate() {
        if rec.t != i + 1 {
            return Err(Error::InvalidInput(format!(
                "trace record {i} has step {}, expected {}",
                rec.t,
                i + 1
            )));
        }
        if !(rec.s_t.is_finite() && rec.w_norm.is_finite() && rec.alpha_t.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "non-finite values at step {}",
                rec.t
            )));
        }
    }

    let check = !strategy.is_projection();
    let mut lemma1 = Vec::new();
    let mut lemma2 = Vec::new();
    let mut lemma4 = Vec::new();
    let mut counts: BTreeMap<usize, u64> = BTreeMap::new();
    let mut max_count = 0u64;
    let mut events = 0usize;
    let mut realized = Vec::new();

    for rec in &trace.records {
        let t = rec.t as f64;
        if let Some(idx) = rec.credited_index {
            let n = counts.entry(idx).or_default();
            *n += 1;
            max_count = max_count.max(*n);
        }
        if let Some(ev) = &rec.maintenance {
            events += 1;
            let live = counts.remove(&ev.removed_index).unwrap_or(0);
            max_count = max_count.max(live).max(ev.removed_update_count);
            realized.push(t * ev.removed_alpha_abs);
            if check {
                let bound = max_count.max(1) as f64 * c * r / t;
                if exceeds(ev.removed_alpha_abs, bound) {
                    lemma4.push(Violation {
                        step: rec.t,
                        observed: ev.removed_alpha_abs,
                        bound,
                    });
                }
            }
        } else {
            realized.push(0.0);
        }
        if check {
            if exceeds(rec.s_t, c * r) {
                lemma1.push(Violation {
                    step: rec.t,
                    observed: rec.s_t,
                    bound: c * r,
                });
            }
            if exceeds(rec.w_norm, c * r * r) {
                lemma2.push(Violation {
                    step: rec.t,
                    observed: rec.w_norm,
                    bound: c * r * r,
                });
            }
        }
    }

    let steps = trace.records.len();
    let bounds = compute_bounds(c, r, max_count.max(1))?;
    let mut regret_curve = Vec::new();
    let mut horizon = 1usize;
    while horizon <= steps {
        regret_curve.push(RegretPoint {
            t: horizon,
            bound: regret_bound(horizon as u64, &bounds, &realized[..horizon])?,
        });
        horizon *= 2;
    }
    if steps > 0 && regret_curve.last().map(|p| p.t) != Some(steps) {
        regret_curve.push(RegretPoint {
            t: steps,
            bound: regret_bound(steps as u64, &bounds, &realized)?,
        });
    }

    Ok(AuditReport {
        strategy,
        steps,
        lemmas_checked: check,
        lemma1_violations: lemma1,
        lemma2_violations: lemma2,
        lemma4_violations: lemma4,
        maintenance_events: events,
        maintenance_rate: if steps > 0 {
            events as f64 / steps as f64
        } else {
            0.0
        },
        max_update_count: max_count.max(1),
        bounds,
        realized_maintenance_sum: realized.iter().sum(),
        regret_curve,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::gen_gaussian_mixture;
    use crate::kernel::KernelSpec;
    use crate::trainer::{train, TrainConfig};

    #[test]
    fn bound_examples() {
        let b = compute_bounds(1.0, 1.0, 1).unwrap();
        assert_eq!((b.g, b.h), (2.0, 1.0));
        assert!((b.w - 4.16227766).abs() < 1e-8);
        let b = compute_bounds(2.0, 1.0, 3).unwrap();
        assert_eq!((b.g, b.h), (4.0, 6.0));
        assert!((b.w - 17.6619038).abs() < 1e-7);
        assert!(compute_bounds(0.0, 1.0, 1).is_err());
    }

    #[test]
    fn bounds_are_monotone() {
        let base = compute_bounds(1.0, 1.0, 2).unwrap();
        for b in [
            compute_bounds(1.5, 1.0, 2).unwrap(),
            compute_bounds(1.0, 1.2, 2).unwrap(),
            compute_bounds(1.0, 1.0, 3).unwrap(),
        ] {
            assert!(b.g >= base.g && b.h >= base.h && b.w >= base.w);
            assert!(b.w >= b.h);
        }
    }

    #[test]
    fn regret_examples() {
        let b = compute_bounds(1.0, 0.5, 1).unwrap();
        // G + H = 0.75 + 0.25 = 1
        let at1 = regret_bound(1, &b, &[]).unwrap();
        assert!((at1 - 0.5).abs() < 1e-15);

        let b = BoundSet {
            r: 1.0,
            g: 1.5,
            h: 0.5,
            w: 1.0,
            m: 1,
        };
        assert_eq!(regret_bound(1, &b, &[]).unwrap(), 2.0);

        let t = 3u64;
        let ratio = regret_bound(2 * t, &b, &[]).unwrap() / regret_bound(t, &b, &[]).unwrap();
        let expected = ((2.0 * 3.0f64).ln() + 1.0) / (2.0 * (3.0f64.ln() + 1.0));
        assert!((ratio - expected).abs() < 1e-12 && ratio < 1.0);

        for t in [1u64, 10, 1000, 123_456] {
            let v = regret_bound(t, &b, &[]).unwrap() * t as f64 / ((t as f64).ln() + 1.0);
            assert!((v - 2.0).abs() < 1e-12);
        }
        assert!(regret_bound(0, &b, &[]).is_err());
        assert!(regret_bound(5, &b, &[-1.0]).is_err());
        assert!(regret_bound(4, &b, &[1.0]).unwrap() > regret_bound(4, &b, &[]).unwrap());
    }

    fn small_data() -> crate::Dataset {
        gen_gaussian_mixture(&[60, 60], &[vec![0.0, 0.0], vec![2.0, 1.0]], &[0.5, 0.5], 3).unwrap()
    }

    #[test]
    fn unbudgeted_trace_has_no_maintenance() {
        let mut cfg = TrainConfig::new(KernelSpec::rbf(1.0).unwrap(), 1.0);
        cfg.stop_theta = 0.0;
        cfg.max_steps = 500;
        let out = train(&small_data(), &cfg).unwrap();
        let report = audit_trace(&out.trace, 1.0, 1.0, BudgetStrategy::Removal).unwrap();
        assert_eq!(report.maintenance_rate, 0.0);
        assert!(report.is_clean());
        assert_eq!(report.regret_curve.last().unwrap().t, 500);
    }

    #[test]
    fn injected_violation_is_reported() {
        let mut cfg = TrainConfig::new(KernelSpec::rbf(1.0).unwrap(), 1.0);
        cfg.stop_theta = 0.0;
        cfg.max_steps = 20;
        let mut trace = train(&small_data(), &cfg).unwrap().trace;
        trace.records[4].s_t = 1.1;
        let report = audit_trace(&trace, 1.0, 1.0, BudgetStrategy::Removal).unwrap();
        assert_eq!(
            report.lemma1_violations,
            vec![Violation {
                step: 5,
                observed: 1.1,
                bound: 1.0
            }]
        );
    }

    #[test]
    fn genuine_removal_run_is_clean() {
        let mut cfg = TrainConfig::new(KernelSpec::rbf(2.0).unwrap(), 1.0);
        cfg.budget = Some(10);
        cfg.stop_theta = 0.0;
        cfg.max_steps = 3000;
        let out = train(&small_data(), &cfg).unwrap();
        let report = audit_trace(&out.trace, 1.0, 1.0, BudgetStrategy::Removal).unwrap();
        assert!(report.maintenance_events > 0);
        assert!(report.is_clean(), "{:?}", report.lemma4_violations.first());
    }

    #[test]
    fn projection_traces_skip_lemmas() {
        let mut cfg = TrainConfig::new(KernelSpec::rbf(2.0).unwrap(), 4.0);
        cfg.budget = Some(8);
        cfg.strategy = BudgetStrategy::ProjectionKnn;
        cfg.stop_theta = 0.0;
        cfg.max_steps = 1000;
        let out = train(&small_data(), &cfg).unwrap();
        let report = audit_trace(&out.trace, 4.0, 1.0, cfg.strategy).unwrap();
        assert!(!report.lemmas_checked);
        assert!(report.maintenance_rate > 0.0);
    }

    #[test]
    fn malformed_trace_is_rejected() {
        let mut cfg = TrainConfig::new(KernelSpec::rbf(1.0).unwrap(), 1.0);
        cfg.stop_theta = 0.0;
        cfg.max_steps = 5;
        let mut trace = train(&small_data(), &cfg).unwrap().trace;
        trace.records.swap(1, 2);
        assert!(matches!(
            audit_trace(&trace, 1.0, 1.0, BudgetStrategy::Removal),
            Err(Error::InvalidInput(_))
        ));
    }
}
