#![allow(dead_code)]

use postproc_core::nalgebra::DMatrix;
use postproc_core::LinearSystem;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Dense Gaussian elimination with partial pivoting; `None` if singular.
pub fn gauss_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[piv][col].abs() < 1e-12 {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for r in col + 1..n {
            let f = a[r][col] / a[col][col];
            if f != 0.0 {
                for c in col..n {
                    a[r][c] -= f * a[col][c];
                }
                b[r] -= f * b[col];
            }
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let s: f64 = (r + 1..n).map(|c| a[r][c] * x[c]).sum();
        x[r] = (b[r] - s) / a[r][r];
    }
    Some(x)
}

/// Projection of `x` onto `{rows . v = b}` over the coordinates in `free`
/// (others fixed at 0), via the KKT system `[[I, A^T], [A, 0]]`.
pub fn kkt_projection(rows: &[Vec<f64>], b: &[f64], x: &[f64], free: &[usize]) -> Option<Vec<f64>> {
    let (m, k) = (rows.len(), free.len());
    let size = k + m;
    let mut mat = vec![vec![0.0; size]; size];
    let mut rhs = vec![0.0; size];
    for (i, &fi) in free.iter().enumerate() {
        mat[i][i] = 1.0;
        rhs[i] = x[fi];
        for r in 0..m {
            mat[i][k + r] = rows[r][fi];
            mat[k + r][i] = rows[r][fi];
        }
    }
    for r in 0..m {
        rhs[k + r] = b[r];
    }
    let sol = gauss_solve(mat, rhs)?;
    let mut v = vec![0.0; x.len()];
    for (i, &fi) in free.iter().enumerate() {
        v[fi] = sol[i];
    }
    Some(v)
}

/// Exhaustive active-set oracle for `min ||v - x|| s.t. Av = b, v >= 0`.
pub fn brute_force_nonneg(rows: &[Vec<f64>], b: &[f64], x: &[f64]) -> Option<Vec<f64>> {
    let n = x.len();
    let mut best: Option<(f64, Vec<f64>)> = None;
    for mask in 0u32..(1 << n) {
        let free: Vec<usize> = (0..n).filter(|i| mask & (1 << i) != 0).collect();
        let Some(v) = kkt_projection(rows, b, x, &free) else { continue };
        let feasible = v.iter().all(|&c| c >= -1e-10)
            && rows.iter().zip(b).all(|(r, bi)| {
                (r.iter().zip(&v).map(|(a, c)| a * c).sum::<f64>() - bi).abs() < 1e-8
            });
        if !feasible {
            continue;
        }
        let d: f64 = v.iter().zip(x).map(|(a, c)| (a - c) * (a - c)).sum();
        if best.as_ref().is_none_or(|(bd, _)| d < *bd) {
            best = Some((d, v));
        }
    }
    best.map(|(_, v)| v)
}

/// Random full-row-rank system with a strictly positive feasible point.
pub struct Instance {
    pub rows: Vec<Vec<f64>>,
    pub b: Vec<f64>,
    pub truth: Vec<f64>,
}

impl Instance {
    pub fn random(rng: &mut impl Rng, n: usize, m: usize, lo: f64, hi: f64) -> Self {
        let rows: Vec<Vec<f64>> = (0..m)
            .map(|_| (0..n).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect();
        let truth: Vec<f64> = (0..n).map(|_| rng.random_range(lo..hi)).collect();
        let b = rows
            .iter()
            .map(|r| r.iter().zip(&truth).map(|(a, x)| a * x).sum())
            .collect();
        Self { rows, b, truth }
    }

    pub fn system(&self, nonneg: bool) -> LinearSystem {
        LinearSystem::from_rows(&self.rows, &self.b, nonneg).unwrap()
    }

    pub fn matrix(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.rows.len(), self.truth.len(), |i, j| self.rows[i][j])
    }
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}

pub fn l2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// `||(I - A^T (A A^T)^{-1} A) d||_inf`, computed with the elimination oracle.
pub fn null_space_component(rows: &[Vec<f64>], d: &[f64]) -> f64 {
    let m = rows.len();
    let gram: Vec<Vec<f64>> = (0..m)
        .map(|i| (0..m).map(|j| rows[i].iter().zip(&rows[j]).map(|(a, b)| a * b).sum()).collect())
        .collect();
    let ad: Vec<f64> = rows.iter().map(|r| r.iter().zip(d).map(|(a, b)| a * b).sum()).collect();
    let y = gauss_solve(gram, ad).expect("full row rank");
    let mut out = d.to_vec();
    for (r, yr) in rows.iter().zip(&y) {
        for (o, a) in out.iter_mut().zip(r) {
            *o -= a * yr;
        }
    }
    out.iter().fold(0.0, |m, v| m.max(v.abs()))
}
