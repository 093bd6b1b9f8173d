//! Closed-form quantities of the post-processing analysis.
//!
//! * Probability that i.i.d. Laplace or double-sided geometric noise lands in
//!   the l1 ball of radius `r`.
//! * The l-infinity bias bound of the non-negative projection,
//!   `C' * Pr(noise outside the ball of radius r_m)`.
//! * `C' = sup_{v in K} ||v - x||_inf` for regions where it is known exactly.
//! * The marginal error law of the sum projection: each coordinate's error is
//!   `((n - 1) eta_i - sum_{j != i} eta_j) / n`, with variance
//!   `2 lambda^2 (1 - 1/n)`.

use rand::RngCore;

use crate::constraints::{LinearSystem, RegionShape};
use crate::error::{check_dim, Error, Result};
use crate::noise::{sample_laplace, RngStream};

/// Radius, dimension and Laplace scale of an l1-ball probability.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BallProbabilityQuery {
    pub radius: f64,
    pub dim: usize,
    pub scale: f64,
}

impl BallProbabilityQuery {
    pub fn new(radius: f64, dim: usize, scale: f64) -> Result<Self> {
        if !(radius >= 0.0) {
            return Err(Error::Domain(format!("radius must be >= 0, got {radius}")));
        }
        if dim == 0 {
            return Err(Error::Domain("dimension must be >= 1".into()));
        }
        if !(scale > 0.0) || !scale.is_finite() {
            return Err(Error::Domain(format!("scale must be positive, got {scale}")));
        }
        Ok(Self { radius, dim, scale })
    }
}

/// `(Pr[N <= n - 1], Pr[N >= n])` for `N ~ Poisson(mu)`.
///
/// Whichever side is smaller is summed directly in log space and the other
/// is its complement, so neither loses relative precision to cancellation.
pub fn poisson_split(n: usize, mu: f64) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    if mu == 0.0 {
        return (1.0, 0.0);
    }
    if mu.is_infinite() {
        return (0.0, 1.0);
    }
    let ln_mu = mu.ln();
    if (n as f64) <= mu {
        // terms increase up to the mode, so the last one is the largest
        let mut lt = -mu;
        let mut terms = Vec::with_capacity(n);
        terms.push(lt);
        for i in 1..n {
            lt += ln_mu - (i as f64).ln();
            terms.push(lt);
        }
        let lower = log_sum_exp(&terms).exp().min(1.0);
        (lower, 1.0 - lower)
    } else {
        let mut lt = -mu;
        for i in 1..=n {
            lt += ln_mu - (i as f64).ln();
        }
        // terms decrease past n > mu; stop when they no longer register
        let head = lt;
        let mut rel = 1.0;
        let mut sum = 1.0;
        let mut i = n;
        loop {
            i += 1;
            rel *= mu / i as f64;
            sum += rel;
            if rel < 1e-17 * sum {
                break;
            }
        }
        let upper = (head + sum.ln()).exp().min(1.0);
        (1.0 - upper, upper)
    }
}

fn log_sum_exp(terms: &[f64]) -> f64 {
    let max = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + terms.iter().map(|t| (t - max).exp()).sum::<f64>().ln()
}

/// `Pr[||eta||_1 <= r]` for `eta ~ Lap(scale)^n`; the Gamma(n, scale) CDF at `r`.
pub fn l1_ball_prob_laplace(q: BallProbabilityQuery) -> f64 {
    poisson_split(q.dim, q.radius / q.scale).1
}

/// `Pr[||eta||_1 > r]` for `eta ~ Lap(scale)^n`, computed without cancellation.
pub fn l1_ball_tail_laplace(q: BallProbabilityQuery) -> f64 {
    poisson_split(q.dim, q.radius / q.scale).0
}

/// Table of the lattice-count polynomials `h_i(s)` for `i < dim`, `s <= radius`,
/// with `h_0 = 1` and `h_{i+1}(s) = sum_{v=-s}^{s} h_i(s - |v|)`.
#[derive(Debug, Clone, PartialEq)]
pub struct HTable {
    radius: usize,
    /// Row-major `[i][s]`.
    values: Vec<f64>,
    /// True when every entry was computed in exact integer arithmetic.
    pub exact: bool,
    /// Bound on the relative error of any entry.
    pub rel_error: f64,
}

impl HTable {
    pub fn new(radius: usize, dim: usize) -> Self {
        let width = radius + 1;
        match Self::exact_rows(radius, dim) {
            Some(rows) => Self {
                radius,
                values: rows.into_iter().map(|v| v as f64).collect(),
                exact: true,
                // only the final cast to f64 rounds
                rel_error: f64::EPSILON,
            },
            None => {
                let mut values = vec![1.0; width];
                for i in 1..dim {
                    let prev = &values[(i - 1) * width..i * width];
                    let mut row = Vec::with_capacity(width);
                    let mut prefix = 0.0;
                    for s in 0..width {
                        row.push(prev[s] + 2.0 * prefix);
                        prefix += prev[s];
                    }
                    values.extend(row);
                }
                Self {
                    radius,
                    values,
                    exact: false,
                    rel_error: (dim * (radius + 2)) as f64 * f64::EPSILON,
                }
            }
        }
    }

    fn exact_rows(radius: usize, dim: usize) -> Option<Vec<u128>> {
        let width = radius + 1;
        let mut values = vec![1u128; width];
        for i in 1..dim {
            let mut prefix = 0u128;
            for s in 0..width {
                let prev = values[(i - 1) * width + s];
                let v = prefix.checked_mul(2)?.checked_add(prev)?;
                values.push(v);
                prefix = prefix.checked_add(prev)?;
            }
        }
        // entries above 2^53 would not survive the cast exactly
        values.iter().all(|&v| v < (1u128 << 53)).then_some(values)
    }

    pub fn get(&self, i: usize, s: usize) -> f64 {
        self.values[i * (self.radius + 1) + s]
    }
}

/// `Pr[||eta||_1 <= r]` for `eta ~ Geom(a)^n`, double-sided geometric noise
/// with pmf `(1 - a) / (1 + a) * a^|k|`:
/// `1 - 2 a^(r+1) / (1 + a) * sum_{i<n} h_i(r) ((1 - a) / (1 + a))^i`.
pub fn l1_ball_prob_geometric(radius: u64, ratio: f64, dim: usize) -> Result<f64> {
    Ok(1.0 - l1_ball_tail_geometric(radius, ratio, dim)?)
}

/// Complement of [`l1_ball_prob_geometric`].
pub fn l1_ball_tail_geometric(radius: u64, ratio: f64, dim: usize) -> Result<f64> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::Domain(format!("ratio must lie in (0, 1), got {ratio}")));
    }
    if dim == 0 {
        return Err(Error::Domain("dimension must be >= 1".into()));
    }
    let r = radius as usize;
    let table = HTable::new(r, dim);
    let ln_p = ((1.0 - ratio) / (1.0 + ratio)).ln();
    let ln_front = 2f64.ln() + (radius as f64 + 1.0) * ratio.ln() - (1.0 + ratio).ln();
    let terms: Vec<f64> = (0..dim)
        .map(|i| ln_front + table.get(i, r).ln() + i as f64 * ln_p)
        .collect();
    Ok(log_sum_exp(&terms).exp().clamp(0.0, 1.0))
}

/// Inputs of the non-negativity bias bound.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BiasBoundInputs {
    /// Smallest true count.
    pub r_m: f64,
    pub scale: f64,
    pub dim: usize,
    /// `sup_{v in K} ||v - x||_inf`.
    pub c_prime: f64,
}

impl BiasBoundInputs {
    pub fn new(r_m: f64, scale: f64, dim: usize, c_prime: f64) -> Result<Self> {
        BallProbabilityQuery::new(r_m, dim, scale)?;
        if !(c_prime >= 0.0) || !c_prime.is_finite() {
            return Err(Error::Domain(format!("C' must be finite and >= 0, got {c_prime}")));
        }
        Ok(Self {
            r_m,
            scale,
            dim,
            c_prime,
        })
    }
}

/// `C' exp(-r_m / lambda) sum_{i<n} (r_m / lambda)^i / i!`.
pub fn bias_bound(inp: BiasBoundInputs) -> f64 {
    inp.c_prime * poisson_split(inp.dim, inp.r_m / inp.scale).0
}

/// `sup_{v in K} ||v - x||_inf` for the simplex and hierarchy regions.
///
/// Each coordinate of those regions ranges independently over `[0, cap]`, so
/// the supremum is `max_i max(x_i, cap - x_i)`, with coordinates forced to the
/// total contributing `|cap - x_i|`.
pub fn sup_distance_cprime(sys: &LinearSystem, x: &[f64]) -> Result<f64> {
    check_dim(sys.n(), x.len())?;
    match sys.shape() {
        RegionShape::Simplex { total } if x.len() == 1 => Ok((total - x[0]).abs()),
        RegionShape::Simplex { total } => Ok(x
            .iter()
            .map(|&xi| xi.max(total - xi))
            .fold(0.0, f64::max)),
        RegionShape::Hierarchy { caps, fixed } => Ok(x
            .iter()
            .zip(caps.iter().zip(fixed))
            .map(|(&xi, (&cap, &fixed))| {
                if fixed {
                    (cap - xi).abs()
                } else {
                    xi.max(cap - xi)
                }
            })
            .fold(0.0, f64::max)),
        RegionShape::General => Err(Error::Unsupported(
            "C' is only known for simplex and hierarchy regions; supply it explicitly".into(),
        )),
    }
}

/// `2 lambda^2 (1 - 1/n)`.
pub fn marginal_error_variance(scale: f64, dim: usize) -> Result<f64> {
    if dim == 0 {
        return Err(Error::Domain("dimension must be >= 1".into()));
    }
    Ok(2.0 * scale * scale * (1.0 - 1.0 / dim as f64))
}

/// One draw of `((n - 1) eta_0 - sum_{j>0} eta_j) / n` using `rng`.
pub fn marginal_error_draw<R: RngCore + ?Sized>(scale: f64, dim: usize, rng: &mut R) -> f64 {
    let first = sample_laplace(scale, rng);
    let rest: f64 = (1..dim).map(|_| sample_laplace(scale, rng)).sum();
    ((dim as f64 - 1.0) * first - rest) / dim as f64
}

/// One draw of the marginal error on its own stream.
pub fn marginal_error_sampler(scale: f64, dim: usize, stream: RngStream) -> Result<f64> {
    if dim == 0 {
        return Err(Error::Domain("dimension must be >= 1".into()));
    }
    Ok(marginal_error_draw(scale, dim, &mut stream.rng()))
}

/// `count` draws of the marginal error from a single stream.
pub fn marginal_error_samples(
    scale: f64,
    dim: usize,
    count: usize,
    stream: RngStream,
) -> Result<Vec<f64>> {
    if dim == 0 {
        return Err(Error::Domain("dimension must be >= 1".into()));
    }
    let mut rng = stream.rng();
    Ok((0..count).map(|_| marginal_error_draw(scale, dim, &mut rng)).collect())
}
