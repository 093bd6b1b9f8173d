//! Differentially private noise, least-squares post-processing onto linear
//! constraint sets, and the bias/variance analysis of that post-processing.
//!
//! The crate is organized bottom-up:
//!
//! * [`noise`]: Laplace and double-sided geometric mechanisms with
//!   deterministic, stream-keyed sampling.
//! * [`constraints`]: linear systems, census-style hierarchies and their file
//!   formats, feasibility checks and the point reflection.
//! * [`projection`]: projections onto `{Av = b}`, `{Av = b, v >= 0}` and a
//!   single sum constraint.
//! * [`analysis`]: l1-ball probabilities, the non-negativity bias bound and the
//!   marginal error law of the sum projection.
//! * [`metrics`]: empirical bias, variance and 1-Wasserstein estimators.
//! * [`harness`]: Monte Carlo experiments and their reports.

pub mod analysis;
pub mod constraints;
mod error;
pub mod harness;
pub mod metrics;
pub mod noise;
pub mod projection;

pub use nalgebra;

pub use constraints::{
    check_feasible, hierarchy_to_system, reflect, Hierarchy, HierarchyNode, LinearSystem,
    Violation,
};
pub use error::{Error, Result};
pub use noise::{NoiseFamily, NoiseSpec, RngStream};
pub use projection::{
    project_affine, project_affine_nonneg, project_hierarchy, project_sum, project_sum_nonneg,
    Backend, ProjectionResult, Projector, SolverOptions,
};
