//! Feasible regions `{v : Av = b}` (optionally with `v >= 0`), census-style
//! hierarchies, and the point reflection used in the bias arguments.

mod hierarchy;
pub mod io;

pub use hierarchy::{hierarchy_to_system, FlatNode, Hierarchy, HierarchyNode, VariableMap};

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{check_dim, Error, Result};

/// Structural hint used where a region-specific closed form exists.
#[derive(Debug, Clone, PartialEq)]
pub enum RegionShape {
    General,
    /// `{v >= 0, sum(v) = total}`.
    Simplex { total: f64 },
    /// Hierarchy system. Every coordinate ranges over `[0, caps[i]]`, except
    /// those marked `fixed`, which the constraints force to equal `caps[i]`.
    Hierarchy { caps: Vec<f64>, fixed: Vec<bool> },
}

/// The constraint set `{v in R^n : Av = b}`, with `v >= 0` when `nonneg`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearSystem {
    a: DMatrix<f64>,
    b: DVector<f64>,
    nonneg: bool,
    shape: RegionShape,
}

impl LinearSystem {
    pub fn new(a: DMatrix<f64>, b: DVector<f64>, nonneg: bool) -> Result<Self> {
        if a.nrows() == 0 || a.ncols() == 0 {
            return Err(Error::Domain("constraint matrix must be at least 1x1".into()));
        }
        check_dim(a.nrows(), b.len())?;
        if a.iter().chain(b.iter()).any(|v| !v.is_finite()) {
            return Err(Error::Domain("constraint data must be finite".into()));
        }
        let shape = if nonneg && a.nrows() == 1 && a.iter().all(|&v| v == 1.0) {
            RegionShape::Simplex { total: b[0] }
        } else {
            RegionShape::General
        };
        Ok(Self {
            a,
            b,
            nonneg,
            shape,
        })
    }

    /// Builds a system from row vectors.
    pub fn from_rows(rows: &[Vec<f64>], b: &[f64], nonneg: bool) -> Result<Self> {
        let m = rows.len();
        let n = rows.first().map_or(0, Vec::len);
        for r in rows {
            check_dim(n, r.len())?;
        }
        let a = DMatrix::from_fn(m, n, |i, j| rows[i][j]);
        Self::new(a, DVector::from_column_slice(b), nonneg)
    }

    /// The single-row system `sum(v) = total`.
    pub fn sum_to(n: usize, total: f64, nonneg: bool) -> Result<Self> {
        Self::new(DMatrix::from_element(1, n, 1.0), DVector::from_element(1, total), nonneg)
    }

    pub(crate) fn with_shape(mut self, shape: RegionShape) -> Self {
        self.shape = shape;
        self
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn b(&self) -> &DVector<f64> {
        &self.b
    }

    pub fn nonneg(&self) -> bool {
        self.nonneg
    }

    pub fn shape(&self) -> &RegionShape {
        &self.shape
    }

    /// Number of variables.
    pub fn n(&self) -> usize {
        self.a.ncols()
    }

    /// Number of equality rows.
    pub fn m(&self) -> usize {
        self.a.nrows()
    }

    /// Same equality rows with the non-negativity flag replaced.
    pub fn with_nonneg(&self, nonneg: bool) -> Self {
        let mut out = self.clone();
        out.nonneg = nonneg;
        if !nonneg {
            if let RegionShape::Simplex { .. } = out.shape {
                out.shape = RegionShape::General;
            }
        } else if out.shape == RegionShape::General {
            out = Self::new(out.a, out.b, true).expect("already validated");
        }
        out
    }

    /// `Av - b`.
    pub fn residual(&self, v: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.n(), v.len())?;
        let r = &self.a * DVector::from_column_slice(v) - &self.b;
        Ok(r.iter().copied().collect())
    }

    /// `||Av - b||_inf`.
    pub fn residual_inf(&self, v: &[f64]) -> Result<f64> {
        Ok(self.residual(v)?.iter().fold(0.0, |m, r| m.max(r.abs())))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationKind {
    Equality,
    NonNegativity,
}

/// A violated constraint. `index` is the row for equality rows and the
/// variable for non-negativity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Violation {
    pub kind: ViolationKind,
    pub index: usize,
    pub residual: f64,
}

/// Lists every constraint of `sys` that `v` violates by more than `tol`.
pub fn check_feasible(v: &[f64], sys: &LinearSystem, tol: f64) -> Result<Vec<Violation>> {
    let mut out: Vec<Violation> = sys
        .residual(v)?
        .into_iter()
        .enumerate()
        .filter(|(_, r)| !(r.abs() <= tol))
        .map(|(index, r)| Violation {
            kind: ViolationKind::Equality,
            index,
            residual: r.abs(),
        })
        .collect();
    if sys.nonneg() {
        out.extend(v.iter().enumerate().filter(|(_, &x)| !(x >= -tol)).map(
            |(index, &x)| Violation {
                kind: ViolationKind::NonNegativity,
                index,
                residual: -x,
            },
        ));
    }
    Ok(out)
}

/// Point reflection of `u` through `center`: `2 center - u`.
pub fn reflect(center: &[f64], u: &[f64]) -> Result<Vec<f64>> {
    check_dim(center.len(), u.len())?;
    Ok(center.iter().zip(u).map(|(c, x)| 2.0 * c - x).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn reflection_examples() {
        let x = vec![1.0, -2.5, 3.0];
        assert_eq!(reflect(&x, &x).unwrap(), x);
        let u = vec![0.3, 7.0, -1.0];
        let back = reflect(&x, &reflect(&x, &u).unwrap()).unwrap();
        assert!(back.iter().zip(&u).all(|(a, b)| (a - b).abs() < 1e-12));
        let r = reflect(&[3.0, 1.5], &[1.7, 3.4]).unwrap();
        assert!((r[0] - 4.3).abs() < 1e-12 && (r[1] + 0.4).abs() < 1e-12);
        assert!(matches!(
            reflect(&[1.0], &[1.0, 2.0]),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn feasibility_checks() {
        let sys = LinearSystem::from_rows(&[vec![1.0, 1.0]], &[2.0], true).unwrap();
        assert!(check_feasible(&[1.0, 1.0], &sys, 1e-6).unwrap().is_empty());
        let v = check_feasible(&[1.5, 1.0], &sys, 1e-6).unwrap();
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].kind, ViolationKind::Equality);
        assert!((v[0].residual - 0.5).abs() < 1e-12);
        let v = check_feasible(&[3.0, -1.0], &sys, 1e-6).unwrap();
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].kind, ViolationKind::NonNegativity);
        assert_eq!(v[0].index, 1);
        assert!(check_feasible(&[1.0], &sys, 1e-6).is_err());
    }

    #[test]
    fn simplex_shape_detected() {
        let sys = LinearSystem::sum_to(3, 5.0, true).unwrap();
        assert_eq!(sys.shape(), &RegionShape::Simplex { total: 5.0 });
        assert_eq!(sys.with_nonneg(false).shape(), &RegionShape::General);
        let s2 = LinearSystem::sum_to(3, 5.0, false).unwrap().with_nonneg(true);
        assert_eq!(s2.shape(), &RegionShape::Simplex { total: 5.0 });
    }

    #[test]
    fn rejects_bad_systems() {
        assert!(LinearSystem::from_rows(&[vec![1.0, 1.0]], &[2.0, 3.0], false).is_err());
        assert!(LinearSystem::from_rows(&[vec![1.0, 1.0], vec![1.0]], &[2.0, 3.0], false).is_err());
        assert!(LinearSystem::from_rows(&[vec![f64::NAN]], &[2.0], false).is_err());
    }

    proptest! {
        #[test]
        fn reflection_is_an_involution(
            c in proptest::collection::vec(-1e3f64..1e3, 1..12),
            seed in proptest::collection::vec(-1e3f64..1e3, 12),
        ) {
            let u = &seed[..c.len()];
            let back = reflect(&c, &reflect(&c, u).unwrap()).unwrap();
            for (a, b) in back.iter().zip(u) {
                prop_assert!((a - b).abs() <= 1e-12 * (1.0 + b.abs()));
            }
        }

        #[test]
        fn reflection_preserves_affine_feasibility(
            x in proptest::collection::vec(0.0f64..10.0, 4),
            d in proptest::collection::vec(-1.0f64..1.0, 4),
        ) {
            // rows: v0 + v1 = b0, v2 - v3 = b1; both x and v = x + t*null are feasible
            let sys = LinearSystem::from_rows(
                &[vec![1.0, 1.0, 0.0, 0.0], vec![0.0, 0.0, 1.0, -1.0]],
                &[x[0] + x[1], x[2] - x[3]],
                false,
            ).unwrap();
            let v = vec![x[0] + d[0], x[1] - d[0], x[2] + d[1], x[3] + d[1]];
            prop_assert!(sys.residual_inf(&v).unwrap() < 1e-9);
            let r = reflect(&x, &v).unwrap();
            prop_assert!(sys.residual_inf(&r).unwrap() < 1e-9);
        }
    }
}
