//! Support vector clustering with a budgeted stochastic-gradient one-class SVM.
//!
//! The pipeline has two phases:
//!
//! 1. [`trainer::train`] fits a large-margin one-class SVM in its primal form by
//!    stochastic gradient descent, keeping the model as a sparse
//!    [`KernelExpansion`] whose size is capped by an optional budget.
//! 2. [`assignment::assign_clusters`] seeds fixed-point trajectories from the
//!    training points near the decision boundary, collapses them onto a small
//!    set of equilibrium points and labels those by segment connectivity.
//!
//! [`cvi`] scores a clustering, [`theory`] turns the convergence analysis of the
//! trainer into computable bounds and a trace auditor, and [`data`] holds the
//! dataset type, CSV I/O and synthetic generators.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod assignment;
pub mod cvi;
pub mod data;
pub mod error;
pub mod kernel;
pub mod rng;
pub mod theory;
pub mod trainer;

pub use assignment::{assign_clusters, AssignConfig, ClusterSolution};
pub use cvi::CviReport;
pub use data::Dataset;
pub use error::{Error, Result};
pub use kernel::{KernelExpansion, KernelSpec, SupportTerm};
pub use theory::{AuditReport, BoundSet};
pub use trainer::{train, BudgetStrategy, TrainConfig, TrainOutput, TrainTrace};
