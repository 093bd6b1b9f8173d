//! Monte Carlo estimators: per-coordinate bias with standard errors, sample
//! variance, and the empirical 1-Wasserstein distance on the line.

use rand::RngCore;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::noise::RngStream;

/// Column means of a residual matrix and their standard errors.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BiasEstimate {
    pub mean: Vec<f64>,
    /// `sample std / sqrt(trials)` per coordinate.
    pub std_error: Vec<f64>,
    pub trials: usize,
}

impl BiasEstimate {
    /// `max_i |mean_i|`.
    pub fn max_abs(&self) -> f64 {
        self.mean.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Coordinate attaining [`Self::max_abs`].
    pub fn argmax_abs(&self) -> usize {
        (0..self.mean.len())
            .max_by(|&i, &j| self.mean[i].abs().total_cmp(&self.mean[j].abs()))
            .unwrap_or(0)
    }

    /// Coordinates whose `|mean|` exceeds `k` standard errors.
    pub fn failing(&self, k: f64) -> Vec<usize> {
        self.mean
            .iter()
            .zip(&self.std_error)
            .enumerate()
            .filter(|(_, (m, se))| !(m.abs() <= k * **se))
            .map(|(i, _)| i)
            .collect()
    }

    /// True when every coordinate is within `k` standard errors of zero.
    pub fn is_zero_within(&self, k: f64) -> bool {
        self.failing(k).is_empty()
    }
}

/// Welford accumulator over rows pushed in a fixed order.
#[derive(Debug, Clone)]
pub struct BiasAccumulator {
    count: usize,
    mean: Vec<f64>,
    m2: Vec<f64>,
}

impl BiasAccumulator {
    pub fn new(dim: usize) -> Self {
        Self {
            count: 0,
            mean: vec![0.0; dim],
            m2: vec![0.0; dim],
        }
    }

    pub fn push(&mut self, row: &[f64]) {
        debug_assert_eq!(row.len(), self.mean.len());
        self.count += 1;
        let c = self.count as f64;
        for ((m, s), &x) in self.mean.iter_mut().zip(self.m2.iter_mut()).zip(row) {
            let d = x - *m;
            *m += d / c;
            *s += d * (x - *m);
        }
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn finish(&self) -> Result<BiasEstimate> {
        if self.count < 2 {
            return Err(Error::Domain(format!(
                "bias estimate needs at least 2 trials, got {}",
                self.count
            )));
        }
        let t = self.count as f64;
        Ok(BiasEstimate {
            mean: self.mean.clone(),
            std_error: self.m2.iter().map(|s| (s / (t - 1.0)).sqrt() / t.sqrt()).collect(),
            trials: self.count,
        })
    }
}

/// Column means and standard errors of a `T x n` residual matrix.
pub fn empirical_bias(rows: &[Vec<f64>]) -> Result<BiasEstimate> {
    let dim = rows.first().map_or(0, Vec::len);
    let mut acc = BiasAccumulator::new(dim);
    for r in rows {
        if r.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: r.len(),
            });
        }
        acc.push(r);
    }
    acc.finish()
}

/// Unbiased sample variance.
pub fn empirical_variance(samples: &[f64]) -> Result<f64> {
    Ok(variance_with_se(samples)?.0)
}

/// Sample variance and its standard error
/// `sqrt((m4 - s^4 (T - 3) / (T - 1)) / T)`.
pub fn variance_with_se(samples: &[f64]) -> Result<(f64, f64)> {
    let t = samples.len();
    if t < 2 {
        return Err(Error::Domain(format!("variance needs at least 2 samples, got {t}")));
    }
    let tf = t as f64;
    let mean = samples.iter().sum::<f64>() / tf;
    let (mut s2, mut s4) = (0.0, 0.0);
    for &x in samples {
        let d = (x - mean) * (x - mean);
        s2 += d;
        s4 += d * d;
    }
    let var = s2 / (tf - 1.0);
    let m4 = s4 / tf;
    let se_sq = (m4 - var * var * (tf - 3.0) / (tf - 1.0)) / tf;
    Ok((var, se_sq.max(0.0).sqrt()))
}

/// Grid size for unequal-size samples.
pub const QUANTILE_GRID: usize = 4096;

/// Empirical 1-Wasserstein distance.
///
/// Equal sizes: mean absolute difference of matched order statistics (exact).
/// Otherwise both empirical quantile functions are compared on a uniform grid
/// of [`QUANTILE_GRID`] midpoints.
pub fn wasserstein1(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::Domain("wasserstein1 needs non-empty samples".into()));
    }
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    Ok(wasserstein1_sorted(&a, &b))
}

/// [`wasserstein1`] for inputs already sorted ascending.
pub fn wasserstein1_sorted(a: &[f64], b: &[f64]) -> f64 {
    if a.len() == b.len() {
        return a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>() / a.len() as f64;
    }
    let quantile = |s: &[f64], u: f64| s[((u * s.len() as f64) as usize).min(s.len() - 1)];
    (0..QUANTILE_GRID)
        .map(|k| {
            let u = (k as f64 + 0.5) / QUANTILE_GRID as f64;
            (quantile(a, u) - quantile(b, u)).abs()
        })
        .sum::<f64>()
        / QUANTILE_GRID as f64
}

/// Bootstrap standard error of [`wasserstein1`], resampling both samples.
pub fn wasserstein1_bootstrap_se(
    a: &[f64],
    b: &[f64],
    replicates: usize,
    stream: RngStream,
) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::Domain("wasserstein1 needs non-empty samples".into()));
    }
    if replicates < 2 {
        return Err(Error::Domain("bootstrap needs at least 2 replicates".into()));
    }
    let mut rng = stream.rng();
    let resample = |s: &[f64], rng: &mut dyn RngCore| -> Vec<f64> {
        let mut out: Vec<f64> = (0..s.len())
            .map(|_| s[(rng.next_u64() % s.len() as u64) as usize])
            .collect();
        out.sort_by(f64::total_cmp);
        out
    };
    let stats: Vec<f64> = (0..replicates)
        .map(|_| {
            let ra = resample(a, &mut rng);
            let rb = resample(b, &mut rng);
            wasserstein1_sorted(&ra, &rb)
        })
        .collect();
    Ok(variance_with_se(&stats)?.0.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::noise::{sample_vector, NoiseSpec};
    use proptest::prelude::*;

    #[test]
    fn bias_of_zero_and_antisymmetric_residuals() {
        let zeros = vec![vec![0.0; 3]; 10];
        let b = empirical_bias(&zeros).unwrap();
        assert_eq!(b.mean, vec![0.0; 3]);
        assert_eq!(b.std_error, vec![0.0; 3]);
        assert!(b.is_zero_within(4.0));

        let r = vec![1.5, -2.0, 0.25];
        let neg: Vec<f64> = r.iter().map(|v| -v).collect();
        let b = empirical_bias(&[r, neg]).unwrap();
        assert!(b.mean.iter().all(|m| m.abs() < 1e-15));
        assert!(empirical_bias(&[vec![1.0]]).is_err());
        assert!(empirical_bias(&[vec![1.0], vec![1.0, 2.0]]).is_err());
    }

    #[test]
    fn standard_error_definition() {
        let rows: Vec<Vec<f64>> = [1.0, 2.0, 3.0, 4.0].iter().map(|&v| vec![v]).collect();
        let b = empirical_bias(&rows).unwrap();
        assert!((b.mean[0] - 2.5).abs() < 1e-15);
        let sd = (5.0f64 / 3.0).sqrt();
        assert!((b.std_error[0] - sd / 2.0).abs() < 1e-15);
    }

    #[test]
    fn variance_values() {
        assert_eq!(empirical_variance(&[3.0; 5]).unwrap(), 0.0);
        assert!((empirical_variance(&[1.0, 2.0, 3.0, 4.0]).unwrap() - 5.0 / 3.0).abs() < 1e-15);
        assert!(empirical_variance(&[1.0]).is_err());

        let spec = NoiseSpec::laplace(10.0).unwrap();
        let xs = sample_vector(&spec, 80_000, RngStream::new(11, 0)).unwrap();
        let (v, se) = variance_with_se(&xs).unwrap();
        assert!((v - 200.0).abs() <= 3.0 * se, "{v} +- {se}");
    }

    #[test]
    fn wasserstein_examples() {
        let a = vec![0.5, -1.0, 3.0, 2.0];
        assert_eq!(wasserstein1(&a, &a).unwrap(), 0.0);
        let shifted: Vec<f64> = a.iter().map(|v| v - 1.75).collect();
        assert!((wasserstein1(&a, &shifted).unwrap() - 1.75).abs() < 1e-15);
        assert!(wasserstein1(&[], &a).is_err());
        // unequal sizes: point masses at 0 and 1
        assert!((wasserstein1(&[0.0; 3], &[1.0; 7]).unwrap() - 1.0).abs() < 1e-15);
    }

    fn samples() -> impl Strategy<Value = Vec<f64>> {
        proptest::collection::vec(-100.0f64..100.0, 8)
    }

    proptest! {
        #[test]
        fn wasserstein_is_a_metric(a in samples(), b in samples(), c in samples()) {
            let ab = wasserstein1(&a, &b).unwrap();
            let ba = wasserstein1(&b, &a).unwrap();
            prop_assert!((ab - ba).abs() < 1e-12);
            prop_assert!(ab >= 0.0);
            let ac = wasserstein1(&a, &c).unwrap();
            let cb = wasserstein1(&c, &b).unwrap();
            prop_assert!(ab <= ac + cb + 1e-9);
            let mut perm = a.clone();
            perm.reverse();
            prop_assert_eq!(wasserstein1(&a, &perm).unwrap(), 0.0);
        }
    }
}
