//! Dykstra's alternating projections between an affine set and the
//! non-negative orthant, with an active-set polish step.
//!
//! For an affine set the Dykstra correction term stays in `range(A^T)` and
//! drops out of the projection, so only the orthant carries one. Every few
//! iterations the coordinates currently clamped at zero are taken as a guess
//! of the active set; the equality-constrained problem on that set is solved
//! exactly and accepted if it satisfies the KKT conditions.

use nalgebra::{DMatrix, DVector};

use super::affine::AffineProjector;
use crate::error::{Error, Result};

pub(crate) struct DykstraOutcome {
    pub solution: DVector<f64>,
    pub iterations: usize,
}

pub(crate) fn solve(
    proj: &AffineProjector,
    x0: &DVector<f64>,
    eps: f64,
    max_iterations: usize,
) -> Result<DykstraOutcome> {
    let n = x0.len();
    let mut x = x0.clone();
    let mut q: DVector<f64> = DVector::zeros(n);
    let mut y = proj.project(&x);
    let mut next_polish = 4;
    let mut gap_at_half = f64::INFINITY;

    for k in 1..=max_iterations {
        y = proj.project(&x);
        let mut change: f64 = 0.0;
        let mut gap: f64 = 0.0;
        for i in 0..n {
            let z = y[i] + q[i];
            let xi = z.max(0.0);
            q[i] = z - xi;
            change = change.max((xi - x[i]).abs());
            gap = gap.max((xi - y[i]).abs());
            x[i] = xi;
        }

        let converged = gap <= eps && change <= eps;
        if converged || k == next_polish {
            if let Some(v) = polish(proj, x0, &x, eps) {
                return Ok(DykstraOutcome {
                    solution: v,
                    iterations: k,
                });
            }
            next_polish *= 2;
        }
        if converged {
            return Ok(DykstraOutcome {
                solution: x,
                iterations: k,
            });
        }
        if k == max_iterations / 2 {
            gap_at_half = gap;
        }
    }

    let gap = (&x - &y).amax();
    if gap > eps && gap > 0.99 * gap_at_half {
        // the two iterates settled at a positive distance: the sets do not meet
        return Err(Error::Infeasible { residual: gap });
    }
    Err(Error::NotConverged {
        iterations: max_iterations,
        residual: gap,
        last_iterate: x.iter().copied().collect(),
    })
}

/// Solves the problem with the zero pattern of `guess` fixed and checks KKT.
fn polish(
    proj: &AffineProjector,
    x0: &DVector<f64>,
    guess: &DVector<f64>,
    eps: f64,
) -> Option<DVector<f64>> {
    let n = x0.len();
    let free: Vec<usize> = (0..n).filter(|&i| guess[i] > 0.0).collect();
    let a = proj.a();
    if free.is_empty() {
        return None;
    }
    let a_free = DMatrix::from_fn(a.nrows(), free.len(), |r, c| a[(r, free[c])]);
    let sub = AffineProjector::new(&a_free, proj.b()).ok()?;
    let x_free = DVector::from_iterator(free.len(), free.iter().map(|&i| x0[i]));
    let (v_free, y) = sub.project_with_multiplier(&x_free);
    if v_free.iter().any(|&v| v < -eps) {
        return None;
    }
    // stationarity on clamped coordinates: mu = (A^T y)_i - x0_i >= 0
    let aty = a.transpose() * &y;
    let mut v = DVector::zeros(n);
    let mut fi = 0;
    for i in 0..n {
        if fi < free.len() && free[fi] == i {
            v[i] = v_free[fi];
            fi += 1;
        } else if aty[i] - x0[i] < -eps {
            return None;
        }
    }
    Some(v)
}
