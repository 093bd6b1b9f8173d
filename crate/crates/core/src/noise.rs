//! Laplace and double-sided geometric noise.
//!
//! Every sampler draws from an [`RngStream`], a `(master_seed, stream_index)`
//! pair that keys an independent ChaCha8 stream. Sample sequences are a pure
//! function of that pair, so Monte Carlo trials can be scheduled on any number
//! of threads and still reproduce bit for bit.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Scale of the Laplace mechanism, `sensitivity / epsilon`.
pub fn mechanism_scale(sensitivity: f64, epsilon: f64) -> Result<f64> {
    if !(epsilon > 0.0) || !epsilon.is_finite() {
        return Err(Error::Domain(format!("epsilon must be positive, got {epsilon}")));
    }
    if !(sensitivity >= 0.0) || !sensitivity.is_finite() {
        return Err(Error::Domain(format!(
            "sensitivity must be non-negative, got {sensitivity}"
        )));
    }
    Ok(sensitivity / epsilon)
}

/// Laplace density `exp(-|x| / scale) / (2 scale)`.
pub fn laplace_pdf(x: f64, scale: f64) -> f64 {
    (-x.abs() / scale).exp() / (2.0 * scale)
}

/// Double-sided geometric pmf `(1 - a) / (1 + a) * a^|k|`.
pub fn geometric_pmf(k: i64, ratio: f64) -> f64 {
    (1.0 - ratio) / (1.0 + ratio) * ratio.powf(k.unsigned_abs() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseFamily {
    Laplace,
    TwoSidedGeometric,
}

/// `(sensitivity, epsilon)` pair a noise scale was derived from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub sensitivity: f64,
    pub epsilon: f64,
}

/// A noise distribution: family plus scale.
///
/// For [`NoiseFamily::Laplace`] the scale is the Laplace `lambda > 0`; for
/// [`NoiseFamily::TwoSidedGeometric`] it is the ratio `a` in `(0, 1)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    family: NoiseFamily,
    scale: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    provenance: Option<Provenance>,
}

impl NoiseSpec {
    pub fn laplace(scale: f64) -> Result<Self> {
        if !(scale > 0.0) || !scale.is_finite() {
            return Err(Error::Domain(format!("Laplace scale must be positive, got {scale}")));
        }
        Ok(Self {
            family: NoiseFamily::Laplace,
            scale,
            provenance: None,
        })
    }

    pub fn geometric(ratio: f64) -> Result<Self> {
        if !(ratio > 0.0 && ratio < 1.0) {
            return Err(Error::Domain(format!(
                "geometric ratio must lie in (0, 1), got {ratio}"
            )));
        }
        Ok(Self {
            family: NoiseFamily::TwoSidedGeometric,
            scale: ratio,
            provenance: None,
        })
    }

    /// Laplace mechanism calibrated to `sensitivity / epsilon`.
    pub fn laplace_mechanism(sensitivity: f64, epsilon: f64) -> Result<Self> {
        let mut spec = Self::laplace(mechanism_scale(sensitivity, epsilon)?)?;
        spec.provenance = Some(Provenance {
            sensitivity,
            epsilon,
        });
        Ok(spec)
    }

    /// Geometric mechanism with ratio `exp(-epsilon / sensitivity)`.
    pub fn geometric_mechanism(sensitivity: f64, epsilon: f64) -> Result<Self> {
        let lambda = mechanism_scale(sensitivity, epsilon)?;
        let mut spec = Self::geometric((-1.0 / lambda).exp())?;
        spec.provenance = Some(Provenance {
            sensitivity,
            epsilon,
        });
        Ok(spec)
    }

    pub fn family(&self) -> NoiseFamily {
        self.family
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn provenance(&self) -> Option<Provenance> {
        self.provenance
    }

    /// Re-checks the type invariants; used after deserialization.
    pub fn validate(&self) -> Result<()> {
        let rebuilt = match self.family {
            NoiseFamily::Laplace => Self::laplace(self.scale)?,
            NoiseFamily::TwoSidedGeometric => Self::geometric(self.scale)?,
        };
        if let (NoiseFamily::Laplace, Some(p)) = (rebuilt.family, self.provenance) {
            if mechanism_scale(p.sensitivity, p.epsilon)? != self.scale {
                return Err(Error::Domain(
                    "Laplace scale disagrees with sensitivity / epsilon".into(),
                ));
            }
        }
        Ok(())
    }

    /// Variance of a single draw.
    pub fn variance(&self) -> f64 {
        match self.family {
            NoiseFamily::Laplace => 2.0 * self.scale * self.scale,
            NoiseFamily::TwoSidedGeometric => {
                let a = self.scale;
                2.0 * a / ((1.0 - a) * (1.0 - a))
            }
        }
    }

    pub fn sample<R: RngCore + ?Sized>(&self, rng: &mut R) -> f64 {
        match self.family {
            NoiseFamily::Laplace => sample_laplace(self.scale, rng),
            NoiseFamily::TwoSidedGeometric => sample_geometric(self.scale, rng) as f64,
        }
    }

    /// Fills `out` with i.i.d. draws.
    pub fn fill<R: RngCore + ?Sized>(&self, rng: &mut R, out: &mut [f64]) {
        for v in out.iter_mut() {
            *v = self.sample(rng);
        }
    }
}

/// Key of an independent random stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RngStream {
    pub master_seed: u64,
    pub stream_index: u64,
}

impl RngStream {
    pub fn new(master_seed: u64, stream_index: u64) -> Self {
        Self {
            master_seed,
            stream_index,
        }
    }

    /// Builds the generator for this stream.
    pub fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.master_seed);
        rng.set_stream(self.stream_index);
        rng
    }
}

/// Draws `n` i.i.d. values from `spec` on the given stream.
pub fn sample_vector(spec: &NoiseSpec, n: usize, stream: RngStream) -> Result<Vec<f64>> {
    if n == 0 {
        return Err(Error::Domain("sample_vector needs n >= 1".into()));
    }
    let mut rng = stream.rng();
    let mut out = vec![0.0; n];
    spec.fill(&mut rng, &mut out);
    Ok(out)
}

/// Uniform on the open interval (0, 1) from the top 53 bits of a word.
fn open_unit<R: RngCore + ?Sized>(rng: &mut R) -> f64 {
    ((rng.next_u64() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
}

/// Inverse-CDF Laplace draw.
pub(crate) fn sample_laplace<R: RngCore + ?Sized>(scale: f64, rng: &mut R) -> f64 {
    let u = open_unit(rng);
    if u < 0.5 {
        scale * (2.0 * u).ln()
    } else {
        -scale * (2.0 * (1.0 - u)).ln()
    }
}

/// Difference of two one-sided geometric draws, each by inverse CDF.
pub(crate) fn sample_geometric<R: RngCore + ?Sized>(ratio: f64, rng: &mut R) -> i64 {
    let ln_a = ratio.ln();
    let g1 = (open_unit(rng).ln() / ln_a).floor() as i64;
    let g2 = (open_unit(rng).ln() / ln_a).floor() as i64;
    g1 - g2
}
