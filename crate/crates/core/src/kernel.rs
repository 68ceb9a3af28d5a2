//! Kernel evaluation and the sparse kernel-expansion model.
//!
//! A model is `w = Σ αᵢ φ(xᵢ)` stored as a list of support terms, with the bias
//! fixed at `ρ = 1`. The squared feature-space norm `‖w‖²` is cached and kept
//! current incrementally by every mutation, with a periodic exact refresh.

use std::cell::Cell;

use serde::{Deserialize, Serialize};

use crate::error::{dim_mismatch, Error, Result};

/// The bias of the one-class hyperplane `wᵀφ(x) = ρ`.
pub const RHO: f64 = 1.0;

pub const DEFAULT_NORM_REFRESH: usize = 1000;

thread_local! {
    static KERNEL_EVALS: Cell<u64> = const { Cell::new(0) };
}

/// Number of kernel evaluations performed on the current thread so far.
pub fn kernel_evaluations() -> u64 {
    KERNEL_EVALS.with(Cell::get)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum KernelSpec {
    /// `K(x, x') = exp(-γ‖x - x'‖²)`.
    Rbf { gamma: f64 },
}

impl KernelSpec {
    pub fn rbf(gamma: f64) -> Result<Self> {
        let spec = KernelSpec::Rbf { gamma };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            KernelSpec::Rbf { gamma } if gamma > 0.0 && gamma.is_finite() => Ok(()),
            KernelSpec::Rbf { gamma } => Err(Error::InvalidInput(format!(
                "RBF gamma must be positive and finite, got {gamma}"
            ))),
        }
    }

    pub fn gamma(&self) -> f64 {
        match *self {
            KernelSpec::Rbf { gamma } => gamma,
        }
    }

    /// Upper bound `R` on `‖φ(x)‖` over the whole input space.
    pub fn feature_norm_bound(&self) -> f64 {
        match self {
            KernelSpec::Rbf { .. } => 1.0,
        }
    }

    pub fn eval(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        if x.len() != y.len() {
            return Err(dim_mismatch(x.len(), y.len()));
        }
        Ok(self.eval_unchecked(x, y))
    }

    pub(crate) fn eval_unchecked(&self, x: &[f64], y: &[f64]) -> f64 {
        KERNEL_EVALS.with(|c| c.set(c.get() + 1));
        match *self {
            KernelSpec::Rbf { gamma } => (-gamma * squared_distance(x, y)).exp(),
        }
    }
}

pub fn squared_distance(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SupportTerm {
    pub x: Vec<f64>,
    pub alpha: f64,
}

/// Where an [`KernelExpansion::add_term`] call landed.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Placement {
    pub position: usize,
    /// `false` when the coefficient was merged into an existing support point.
    pub new_point: bool,
}

#[derive(Clone, Debug)]
pub struct KernelExpansion {
    kernel: KernelSpec,
    dim: usize,
    support: Vec<SupportTerm>,
    norm_sq: f64,
    refresh_every: usize,
    mutations: usize,
}

impl KernelExpansion {
    pub fn new(kernel: KernelSpec, dim: usize) -> Self {
        Self {
            kernel,
            dim,
            support: Vec::new(),
            norm_sq: 0.0,
            refresh_every: DEFAULT_NORM_REFRESH,
            mutations: 0,
        }
    }

    /// Builds a model from explicit terms. Terms are kept verbatim: duplicate
    /// points are not merged and zero coefficients are not dropped.
    pub fn from_terms(kernel: KernelSpec, dim: usize, terms: Vec<SupportTerm>) -> Result<Self> {
        kernel.validate()?;
        if dim == 0 {
            return Err(Error::InvalidInput(
                "model dimension must be positive".into(),
            ));
        }
        for term in &terms {
            if term.x.len() != dim {
                return Err(dim_mismatch(dim, term.x.len()));
            }
            if !term.alpha.is_finite() || term.x.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidInput("support terms must be finite".into()));
            }
        }
        let mut model = Self::new(kernel, dim);
        model.support = terms;
        model.refresh_norm();
        Ok(model)
    }

    /// Exact norm refresh period, counted in mutating calls.
    pub fn with_norm_refresh(mut self, every: usize) -> Self {
        self.refresh_every = every.max(1);
        self
    }

    pub fn kernel(&self) -> &KernelSpec {
        &self.kernel
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn rho(&self) -> f64 {
        RHO
    }

    pub fn support(&self) -> &[SupportTerm] {
        &self.support
    }

    pub fn len(&self) -> usize {
        self.support.len()
    }

    pub fn is_empty(&self) -> bool {
        self.support.is_empty()
    }

    /// Cached `‖w‖²`.
    pub fn norm_sq(&self) -> f64 {
        self.norm_sq
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq.sqrt()
    }

    /// `Σ |αᵢ|`.
    pub fn l1_norm(&self) -> f64 {
        self.support.iter().map(|t| t.alpha.abs()).sum()
    }

    /// `‖w‖²` from the full Gram quadratic form, ignoring the cache.
    pub fn exact_norm_sq(&self) -> f64 {
        let mut total = 0.0;
        for (i, a) in self.support.iter().enumerate() {
            total += a.alpha * a.alpha * self.kernel.eval_unchecked(&a.x, &a.x);
            for b in &self.support[i + 1..] {
                total += 2.0 * a.alpha * b.alpha * self.kernel.eval_unchecked(&a.x, &b.x);
            }
        }
        total.max(0.0)
    }

    pub fn refresh_norm(&mut self) {
        self.norm_sq = self.exact_norm_sq();
    }

    fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim {
            return Err(dim_mismatch(self.dim, x.len()));
        }
        Ok(())
    }

    /// `wᵀφ(x) = Σ αᵢ K(xᵢ, x)`.
    pub fn margin_score(&self, x: &[f64]) -> Result<f64> {
        self.check_dim(x)?;
        Ok(self.margin_unchecked(x))
    }

    pub(crate) fn margin_unchecked(&self, x: &[f64]) -> f64 {
        self.support
            .iter()
            .map(|t| t.alpha * self.kernel.eval_unchecked(&t.x, x))
            .sum()
    }

    /// `f(x) = wᵀφ(x) - ρ`; non-negative inside the domain of novelty.
    pub fn decision_value(&self, x: &[f64]) -> Result<f64> {
        Ok(self.margin_score(x)? - RHO)
    }

    pub fn scale_coefficients(&mut self, factor: f64) {
        for term in &mut self.support {
            term.alpha *= factor;
        }
        self.norm_sq *= factor * factor;
        self.bump();
    }

    pub fn position_of(&self, x: &[f64]) -> Option<usize> {
        self.support.iter().position(|t| t.x == x)
    }

    /// Adds `coeff · φ(x)`, merging into an existing support point with
    /// identical coordinates. A zero coefficient is a no-op and returns `None`.
    pub fn add_term(&mut self, x: &[f64], coeff: f64) -> Result<Option<Placement>> {
        self.check_dim(x)?;
        if !coeff.is_finite() {
            return Err(Error::InvalidInput(format!(
                "coefficient must be finite, got {coeff}"
            )));
        }
        if coeff == 0.0 {
            return Ok(None);
        }
        let score = self.margin_unchecked(x);
        let k_xx = self.kernel.eval_unchecked(x, x);
        Ok(Some(self.add_term_scored(x, coeff, score, k_xx)))
    }

    /// `add_term` with `wᵀφ(x)` and `K(x, x)` already known to the caller.
    pub(crate) fn add_term_scored(
        &mut self,
        x: &[f64],
        coeff: f64,
        score: f64,
        k_xx: f64,
    ) -> Placement {
        self.norm_sq = (self.norm_sq + 2.0 * coeff * score + coeff * coeff * k_xx).max(0.0);
        let placement = match self.position_of(x) {
            Some(position) => {
                self.support[position].alpha += coeff;
                Placement {
                    position,
                    new_point: false,
                }
            }
            None => {
                self.support.push(SupportTerm {
                    x: x.to_vec(),
                    alpha: coeff,
                });
                Placement {
                    position: self.support.len() - 1,
                    new_point: true,
                }
            }
        };
        self.bump();
        placement
    }

    /// Adds `delta` to the coefficient of the term at `position`.
    pub fn increment_alpha(&mut self, position: usize, delta: f64) -> Result<()> {
        let term = self.support.get(position).ok_or_else(|| {
            Error::InvalidInput(format!(
                "support index {position} out of range ({})",
                self.len()
            ))
        })?;
        if delta == 0.0 {
            return Ok(());
        }
        let score = self.margin_unchecked(&term.x);
        let k_xx = self.kernel.eval_unchecked(&term.x, &term.x);
        self.norm_sq = (self.norm_sq + 2.0 * delta * score + delta * delta * k_xx).max(0.0);
        self.support[position].alpha += delta;
        self.bump();
        Ok(())
    }

    pub fn remove_term(&mut self, index: usize) -> Result<SupportTerm> {
        if index >= self.support.len() {
            return Err(Error::InvalidInput(format!(
                "support index {index} out of range ({})",
                self.support.len()
            )));
        }
        let term = self.support.remove(index);
        // ‖w - αφ(x)‖² = ‖w‖² - 2α·(rest)ᵀφ(x) - α²K(x,x) with rest = w - αφ(x).
        let k_xx = self.kernel.eval_unchecked(&term.x, &term.x);
        let rest_score = self.margin_unchecked(&term.x);
        self.norm_sq =
            (self.norm_sq - 2.0 * term.alpha * rest_score - term.alpha * term.alpha * k_xx)
                .max(0.0);
        if self.support.is_empty() {
            self.norm_sq = 0.0;
        }
        self.bump();
        Ok(term)
    }

    fn bump(&mut self) {
        self.mutations += 1;
        if self.mutations.is_multiple_of(self.refresh_every) {
            self.refresh_norm();
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&ModelFile::from(self))?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let file: ModelFile = serde_json::from_str(s)?;
        file.try_into()
    }
}

impl Serialize for KernelExpansion {
    fn serialize<S: serde::Serializer>(
        &self,
        serializer: S,
    ) -> std::result::Result<S::Ok, S::Error> {
        ModelFile::from(self).serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for KernelExpansion {
    fn deserialize<D: serde::Deserializer<'de>>(
        deserializer: D,
    ) -> std::result::Result<Self, D::Error> {
        ModelFile::deserialize(deserializer)?
            .try_into()
            .map_err(serde::de::Error::custom)
    }
}

/// On-disk model layout.
#[derive(Serialize, Deserialize)]
struct ModelFile {
    kernel: KernelSpec,
    rho: f64,
    dim: usize,
    support: Vec<SupportTerm>,
}

impl From<&KernelExpansion> for ModelFile {
    fn from(m: &KernelExpansion) -> Self {
        ModelFile {
            kernel: m.kernel,
            rho: RHO,
            dim: m.dim,
            support: m.support.clone(),
        }
    }
}

impl TryFrom<ModelFile> for KernelExpansion {
    type Error = Error;

    fn try_from(file: ModelFile) -> Result<Self> {
        if file.rho != RHO {
            return Err(Error::InvalidInput(format!(
                "model rho must be 1, got {}",
                file.rho
            )));
        }
        KernelExpansion::from_terms(file.kernel, file.dim, file.support)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * (1.0 + a.abs().max(b.abs()))
    }

    fn rbf(gamma: f64) -> KernelSpec {
        KernelSpec::rbf(gamma).unwrap()
    }

    /// Two 1-d points whose RBF similarity under gamma = 1 is exactly 0.5.
    fn half_pair() -> (Vec<f64>, Vec<f64>) {
        (vec![0.0], vec![std::f64::consts::LN_2.sqrt()])
    }

    #[test]
    fn kernel_eval_examples() {
        let k = rbf(0.5);
        assert_eq!(k.eval(&[0.3, -1.2], &[0.3, -1.2]).unwrap(), 1.0);
        // ‖x - y‖² = 2
        let v = k.eval(&[0.0, 0.0], &[1.0, 1.0]).unwrap();
        assert!((v - 0.3678794412).abs() < 1e-10);
        let v = rbf(1.0).eval(&[0.0, 0.0], &[1.0, 1.0]).unwrap();
        assert!((v - 0.1353352832).abs() < 1e-10);
    }

    #[test]
    fn kernel_rejects_bad_input() {
        assert!(KernelSpec::rbf(0.0).is_err());
        assert!(KernelSpec::rbf(-1.0).is_err());
        assert!(matches!(
            rbf(1.0).eval(&[0.0], &[0.0, 1.0]),
            Err(Error::InvalidInput(_))
        ));
    }

    #[test]
    fn margin_and_decision_examples() {
        let (x1, x2) = half_pair();
        let mut m = KernelExpansion::new(rbf(1.0), 1);
        assert_eq!(m.margin_score(&[3.0]).unwrap(), 0.0);
        assert_eq!(m.decision_value(&[3.0]).unwrap(), -1.0);

        m.add_term(&x1, 2.0).unwrap();
        assert_eq!(m.margin_score(&x1).unwrap(), 2.0);
        assert_eq!(m.decision_value(&x1).unwrap(), 1.0);

        let mut m = KernelExpansion::new(rbf(1.0), 1);
        m.add_term(&x1, 1.0).unwrap();
        assert_eq!(m.decision_value(&x1).unwrap(), 0.0);
        m.add_term(&x2, 1.0).unwrap();
        assert!(close(m.margin_score(&x1).unwrap(), 1.5, 1e-12));
        assert!(m.margin_score(&[0.0, 0.0]).is_err());
    }

    #[test]
    fn scale_examples() {
        let (x1, x2) = half_pair();
        let mut m = KernelExpansion::new(rbf(1.0), 1);
        m.add_term(&x1, 1.0).unwrap();
        m.add_term(&x2, 2.0).unwrap();
        let before = m.norm_sq();
        m.scale_coefficients(1.0);
        assert_eq!(m.norm_sq(), before);
        m.scale_coefficients(0.5);
        let alphas: Vec<f64> = m.support().iter().map(|t| t.alpha).collect();
        assert_eq!(alphas, vec![0.5, 1.0]);
        assert!(close(m.norm_sq(), 0.25 * before, 1e-12));
        assert!(close(m.norm_sq(), m.exact_norm_sq(), 1e-12));
        m.scale_coefficients(0.0);
        assert_eq!(m.len(), 2);
        assert_eq!(m.norm_sq(), 0.0);
        assert!(m.support().iter().all(|t| t.alpha == 0.0));
    }

    #[test]
    fn add_examples() {
        let (x1, x2) = half_pair();
        let mut m = KernelExpansion::new(rbf(1.0), 1);
        m.add_term(&x1, 0.7).unwrap();
        assert!(close(m.norm_sq(), 0.49, 1e-15));

        assert_eq!(m.add_term(&x2, 0.0).unwrap(), None);
        assert_eq!(m.len(), 1);

        let mut m = KernelExpansion::new(rbf(1.0), 1);
        m.add_term(&x1, 1.0).unwrap();
        let placed = m.add_term(&x2, 1.0).unwrap().unwrap();
        assert!(placed.new_point);
        assert!(close(m.norm_sq(), 3.0, 1e-12));

        let merged = m.add_term(&x1, 0.5).unwrap().unwrap();
        assert_eq!(
            merged,
            Placement {
                position: 0,
                new_point: false
            }
        );
        assert_eq!(m.support()[0].alpha, 1.5);
        assert!(close(m.norm_sq(), m.exact_norm_sq(), 1e-12));
    }

    #[test]
    fn remove_examples() {
        let (x1, x2) = half_pair();
        let mut m = KernelExpansion::new(rbf(1.0), 1);
        m.add_term(&x1, 1.0).unwrap();
        m.remove_term(0).unwrap();
        assert!(m.is_empty());
        assert_eq!(m.norm_sq(), 0.0);

        m.add_term(&x1, 1.0).unwrap();
        m.add_term(&x2, 1.0).unwrap();
        let removed = m.remove_term(1).unwrap();
        assert!(close(m.norm_sq(), 1.0, 1e-12));

        m.add_term(&removed.x, removed.alpha).unwrap();
        assert!(close(m.norm_sq(), 3.0, 1e-9));
        assert!(matches!(m.remove_term(2), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn json_round_trip_is_bit_faithful() {
        let mut m = KernelExpansion::new(rbf(0.125), 2);
        m.add_term(&[0.1, 1.0 / 3.0], std::f64::consts::PI / 7.0)
            .unwrap();
        m.add_term(&[-2.5e-7, 1e300], 1e-17).unwrap();
        let text = m.to_json().unwrap();
        assert!(text.contains("\"kind\":\"rbf\""));
        assert!(text.contains("\"rho\":1.0"));
        let back = KernelExpansion::from_json(&text).unwrap();
        assert_eq!(back.support(), m.support());
        assert_eq!(back.kernel(), m.kernel());
        assert_eq!(back.to_json().unwrap(), text);
    }

    #[test]
    fn json_rejects_wrong_rho_and_ragged_support() {
        let bad_rho = r#"{"kernel":{"kind":"rbf","gamma":1.0},"rho":2.0,"dim":1,"support":[]}"#;
        assert!(KernelExpansion::from_json(bad_rho).is_err());
        let ragged = r#"{"kernel":{"kind":"rbf","gamma":1.0},"rho":1.0,"dim":2,"support":[{"x":[1.0],"alpha":1.0}]}"#;
        assert!(KernelExpansion::from_json(ragged).is_err());
    }

    #[test]
    fn eval_counter_tracks_calls() {
        let k = rbf(1.0);
        let before = kernel_evaluations();
        for _ in 0..5 {
            k.eval(&[0.0], &[1.0]).unwrap();
        }
        assert_eq!(kernel_evaluations() - before, 5);
    }
}
