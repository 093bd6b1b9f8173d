use nalgebra::{DMatrix, DVector};

use crate::error::{check_dim, Error, Result};

/// Euclidean projector onto `{v : Av = b}`.
///
/// Factorizes `A` once by SVD. The projection of `x` is `x - A^T y` where
/// `y` is the minimum-norm solution of `(A A^T) y = Ax - b`; numerically
/// this is `x - A^+ (Ax - b)`, which holds for any rank of `A`.
#[derive(Debug, Clone)]
pub struct AffineProjector {
    a: DMatrix<f64>,
    b: DVector<f64>,
    /// `A^+`, n x m.
    pinv: DMatrix<f64>,
    /// `(A A^T)^+`, m x m.
    gram_pinv: DMatrix<f64>,
    rank: usize,
}

impl AffineProjector {
    /// Fails with [`Error::Infeasible`] when `Av = b` has no solution.
    pub fn new(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<Self> {
        check_dim(a.nrows(), b.len())?;
        let (m, n) = a.shape();
        let svd = a.clone().svd(true, true);
        let (u, v_t) = (svd.u.as_ref().unwrap(), svd.v_t.as_ref().unwrap());
        let sigma_max = svd.singular_values.iter().copied().fold(0.0, f64::max);
        let cutoff = sigma_max * (m.max(n) as f64) * f64::EPSILON;

        let k = svd.singular_values.len();
        let mut pinv = DMatrix::zeros(n, m);
        let mut gram_pinv = DMatrix::zeros(m, m);
        let mut rank = 0;
        for i in 0..k {
            let s = svd.singular_values[i];
            if s <= cutoff || s == 0.0 {
                continue;
            }
            rank += 1;
            let ui = u.column(i);
            let vi = v_t.row(i).transpose();
            pinv += (&vi * ui.transpose()) / s;
            gram_pinv += (&ui * ui.transpose()) / (s * s);
        }

        let proj = Self {
            a: a.clone(),
            b: b.clone(),
            pinv,
            gram_pinv,
            rank,
        };
        let v0 = &proj.pinv * b;
        let residual = (a * v0 - b).amax();
        if residual > 1e-9 * (1.0 + b.amax()) {
            return Err(Error::Infeasible { residual });
        }
        Ok(proj)
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn n(&self) -> usize {
        self.a.ncols()
    }

    /// Projection of `x`.
    pub fn project(&self, x: &DVector<f64>) -> DVector<f64> {
        let r = &self.a * x - &self.b;
        x - &self.pinv * r
    }

    /// Projection of `x` together with the minimum-norm multiplier `y`.
    pub fn project_with_multiplier(&self, x: &DVector<f64>) -> (DVector<f64>, DVector<f64>) {
        let r = &self.a * x - &self.b;
        let y = &self.gram_pinv * &r;
        (x - &self.pinv * r, y)
    }

    /// `(I - A^+ A) d`: the component of `d` in `null(A)`.
    pub fn null_component(&self, d: &DVector<f64>) -> DVector<f64> {
        d - &self.pinv * (&self.a * d)
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn b(&self) -> &DVector<f64> {
        &self.b
    }
}
