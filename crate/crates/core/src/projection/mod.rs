//! Least-squares post-processing: Euclidean projection of a noisy vector onto
//! `{Av = b}`, `{Av = b, v >= 0}`, or a single sum constraint.

mod affine;
mod dykstra;
mod simplex;

pub use affine::AffineProjector;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::constraints::{hierarchy_to_system, Hierarchy, LinearSystem, RegionShape};
use crate::error::{check_dim, Error, Result};

/// A projected vector plus solver diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProjectionResult {
    pub solution: Vec<f64>,
    /// `||solution - input||_2`.
    pub objective: f64,
    /// Solver iterations; 0 for closed-form paths.
    pub iterations: usize,
    /// `||A solution - b||_inf`.
    pub residual_inf: f64,
    /// Coordinates clamped at zero.
    pub active_nonneg: usize,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Backend {
    /// Use a closed form where the region has one (a single sum row), and
    /// Dykstra otherwise.
    #[default]
    ClosedForm,
    /// Always iterate.
    Dykstra,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    /// Feasibility tolerance; `None` means `1e-8 * (1 + ||input||_inf)`.
    pub eps_feas: Option<f64>,
    pub max_iterations: usize,
    pub backend: Backend,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            eps_feas: None,
            max_iterations: 100_000,
            backend: Backend::ClosedForm,
        }
    }
}

impl SolverOptions {
    pub fn eps_for(&self, x: &[f64]) -> f64 {
        self.eps_feas
            .unwrap_or_else(|| 1e-8 * (1.0 + x.iter().fold(0.0, |m: f64, v| m.max(v.abs()))))
    }
}

/// A solver prepared for one constraint system; reuse it across inputs.
#[derive(Debug, Clone)]
pub struct Projector {
    sys: LinearSystem,
    affine: AffineProjector,
    opts: SolverOptions,
    /// Largest absolute row sum of `A`.
    row_norm: f64,
}

impl Projector {
    /// Fails with [`Error::Infeasible`] when `Av = b` is inconsistent.
    pub fn new(sys: &LinearSystem, opts: SolverOptions) -> Result<Self> {
        if opts.max_iterations == 0 {
            return Err(Error::Domain("max_iterations must be positive".into()));
        }
        if let RegionShape::Simplex { total } = sys.shape() {
            if *total < 0.0 {
                return Err(Error::Infeasible { residual: -total });
            }
        }
        let affine = AffineProjector::new(sys.a(), sys.b())?;
        let row_norm = sys
            .a()
            .row_iter()
            .map(|r| r.iter().map(|v| v.abs()).sum::<f64>())
            .fold(1.0, f64::max);
        Ok(Self {
            sys: sys.clone(),
            affine,
            opts,
            row_norm,
        })
    }

    pub fn system(&self) -> &LinearSystem {
        &self.sys
    }

    pub fn affine(&self) -> &AffineProjector {
        &self.affine
    }

    /// Projects onto the system, honoring its non-negativity flag.
    pub fn project(&self, x: &[f64]) -> Result<ProjectionResult> {
        check_dim(self.sys.n(), x.len())?;
        if !self.sys.nonneg() {
            let v = self.affine.project(&DVector::from_column_slice(x));
            return self.finish(x, v.as_slice().to_vec(), 0);
        }
        match (self.sys.shape(), self.opts.backend) {
            (RegionShape::Simplex { total }, Backend::ClosedForm) => {
                let (v, _) = simplex::project_simplex(x, *total);
                self.finish(x, v, 0)
            }
            _ => {
                let eps = self.opts.eps_for(x);
                let out = dykstra::solve(
                    &self.affine,
                    &DVector::from_column_slice(x),
                    eps / self.row_norm,
                    self.opts.max_iterations,
                )?;
                self.finish(x, out.solution.as_slice().to_vec(), out.iterations)
            }
        }
    }

    fn finish(&self, x: &[f64], v: Vec<f64>, iterations: usize) -> Result<ProjectionResult> {
        let objective = x
            .iter()
            .zip(&v)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        let residual_inf = self.sys.residual_inf(&v)?;
        let eps = self.opts.eps_for(x);
        if !(residual_inf <= eps) {
            return Err(Error::NotConverged {
                iterations,
                residual: residual_inf,
                last_iterate: v,
            });
        }
        let active_nonneg = if self.sys.nonneg() {
            v.iter().filter(|&&c| c == 0.0).count()
        } else {
            0
        };
        Ok(ProjectionResult {
            solution: v,
            objective,
            iterations,
            residual_inf,
            active_nonneg,
        })
    }
}

/// Projection onto `{Av = b}`. The system's non-negativity flag is ignored.
pub fn project_affine(x: &[f64], sys: &LinearSystem) -> Result<ProjectionResult> {
    Projector::new(&sys.with_nonneg(false), SolverOptions::default())?.project(x)
}

/// Projection onto `{Av = b, v >= 0}`, whatever the system's flag says.
pub fn project_affine_nonneg(
    x: &[f64],
    sys: &LinearSystem,
    opts: SolverOptions,
) -> Result<ProjectionResult> {
    Projector::new(&sys.with_nonneg(true), opts)?.project(x)
}

/// Projection onto `{sum(v) = total}`: spreads the deficit evenly.
pub fn project_sum(x: &[f64], total: f64) -> Result<ProjectionResult> {
    if x.is_empty() {
        return Err(Error::Domain("project_sum needs at least one coordinate".into()));
    }
    let shift = (total - x.iter().sum::<f64>()) / x.len() as f64;
    let solution: Vec<f64> = x.iter().map(|v| v + shift).collect();
    let residual_inf = (solution.iter().sum::<f64>() - total).abs();
    Ok(ProjectionResult {
        objective: shift.abs() * (x.len() as f64).sqrt(),
        solution,
        iterations: 0,
        residual_inf,
        active_nonneg: 0,
    })
}

/// Projection onto the scaled simplex `{v >= 0, sum(v) = total}`.
pub fn project_sum_nonneg(x: &[f64], total: f64) -> Result<ProjectionResult> {
    if x.is_empty() {
        return Err(Error::Domain("project_sum_nonneg needs at least one coordinate".into()));
    }
    if !(total >= 0.0) {
        return Err(Error::Domain(format!("total must be non-negative, got {total}")));
    }
    let (solution, _) = simplex::project_simplex(x, total);
    let objective = x
        .iter()
        .zip(&solution)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt();
    let residual_inf = (solution.iter().sum::<f64>() - total).abs();
    let active_nonneg = solution.iter().filter(|&&v| v == 0.0).count();
    Ok(ProjectionResult {
        solution,
        objective,
        iterations: 0,
        residual_inf,
        active_nonneg,
    })
}

/// Restores consistency of noisy node counts (indexed as by
/// [`hierarchy_to_system`] with `leaves_only = false`).
pub fn project_hierarchy(
    x: &[f64],
    h: &Hierarchy,
    opts: SolverOptions,
) -> Result<ProjectionResult> {
    let (sys, _) = hierarchy_to_system(h, false)?;
    Projector::new(&sys, opts)?.project(x)
}
