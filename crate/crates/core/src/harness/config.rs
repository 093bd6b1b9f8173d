//! Experiment configuration and its flat `key = value` file format.
//!
//! ```text
//! # comments start with '#'
//! kind = bias_P
//! data_source = synthetic            # or a path to a hierarchy CSV/JSON
//! synthetic.branching = 2,3
//! synthetic.leaf_range = 0,20
//! synthetic.seed = 7
//! noise = laplace                    # or geometric
//! noise.scale = 2                    # or noise.sensitivity + noise.epsilon
//! trials = 10000
//! master_seed = 42
//! shift_factors = 0,4,10
//! dimensions = 2,5,10
//! output_dir = out
//! ```
//!
//! Keys are the [`ExperimentConfig`] field names; nested settings use a dotted
//! prefix. Lists are comma separated.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::Serialize;

use super::synthetic::SyntheticHierarchySpec;
use crate::error::{Error, Result};
use crate::noise::{NoiseFamily, NoiseSpec, RngStream};

/// Minimum trials for the statistical experiment kinds.
pub const MIN_TRIALS: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ExperimentKind {
    #[serde(rename = "bias_P")]
    BiasP,
    #[serde(rename = "bias_Pplus_shift")]
    BiasPplusShift,
    #[serde(rename = "convergence_PS")]
    ConvergencePs,
    #[serde(rename = "variance_PS")]
    VariancePs,
    #[serde(rename = "bound_check")]
    BoundCheck,
}

impl ExperimentKind {
    pub fn name(&self) -> &'static str {
        match self {
            Self::BiasP => "bias_P",
            Self::BiasPplusShift => "bias_Pplus_shift",
            Self::ConvergencePs => "convergence_PS",
            Self::VariancePs => "variance_PS",
            Self::BoundCheck => "bound_check",
        }
    }
}

impl FromStr for ExperimentKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "bias_p" => Ok(Self::BiasP),
            "bias_pplus_shift" => Ok(Self::BiasPplusShift),
            "convergence_ps" => Ok(Self::ConvergencePs),
            "variance_ps" => Ok(Self::VariancePs),
            "bound_check" => Ok(Self::BoundCheck),
            _ => Err(Error::Parse(format!("unknown experiment kind {s:?}"))),
        }
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DataSource {
    Synthetic(SyntheticHierarchySpec),
    File(PathBuf),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    pub data_source: DataSource,
    pub noise: NoiseSpec,
    pub trials: usize,
    pub master_seed: u64,
    /// Leaf shifts of the `bias_Pplus_shift` sweep.
    pub shift_factors: Vec<f64>,
    /// Dimensions of the sum-projection experiments.
    pub dimensions: Vec<usize>,
    /// Project onto the leaf-sum system instead of the full hierarchy.
    pub leaves_only: bool,
    /// Supplied C'; computed from the region when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub c_prime: Option<f64>,
    /// Bootstrap replicates for Wasserstein standard errors.
    pub bootstrap: usize,
    pub write_residuals: bool,
    /// Where output files go; not part of the report.
    #[serde(skip)]
    pub output_dir: PathBuf,
}

impl ExperimentConfig {
    /// Defaults for everything but the kind.
    pub fn new(kind: ExperimentKind, noise: NoiseSpec) -> Self {
        Self {
            kind,
            data_source: DataSource::Synthetic(SyntheticHierarchySpec {
                branching: vec![2, 3],
                leaf_range: (0, 100),
                stream: RngStream::new(0, 0),
                pin_min_leaf: false,
            }),
            noise,
            trials: match kind {
                ExperimentKind::VariancePs => 80_000,
                ExperimentKind::ConvergencePs => 100_000,
                _ => 10_000,
            },
            master_seed: 0,
            shift_factors: Vec::new(),
            dimensions: Vec::new(),
            leaves_only: false,
            c_prime: None,
            bootstrap: 50,
            write_residuals: true,
            output_dir: PathBuf::from("."),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.noise.validate()?;
        if self.trials < MIN_TRIALS {
            return Err(Error::Domain(format!(
                "trials must be at least {MIN_TRIALS} for statistical experiments, got {}",
                self.trials
            )));
        }
        match self.kind {
            ExperimentKind::BiasPplusShift => {
                if self.shift_factors.is_empty() {
                    return Err(Error::Domain("shift_factors must be non-empty".into()));
                }
                if self.shift_factors.iter().any(|s| !(*s >= 0.0)) {
                    return Err(Error::Domain("shift factors must be non-negative".into()));
                }
            }
            ExperimentKind::ConvergencePs | ExperimentKind::VariancePs => {
                if self.noise.family() != NoiseFamily::Laplace {
                    return Err(Error::Domain(format!("{} needs Laplace noise", self.kind)));
                }
                if self.dimensions.is_empty() || self.dimensions.contains(&0) {
                    return Err(Error::Domain("dimensions must be non-empty and >= 1".into()));
                }
                if self.kind == ExperimentKind::VariancePs && self.dimensions.len() != 2 {
                    return Err(Error::Domain("variance_PS needs exactly two dimensions".into()));
                }
                if self.kind == ExperimentKind::ConvergencePs && self.bootstrap < 2 {
                    return Err(Error::Domain("bootstrap must be >= 2".into()));
                }
            }
            ExperimentKind::BoundCheck => {
                if self.noise.family() != NoiseFamily::Laplace {
                    return Err(Error::Domain("bound_check needs Laplace noise".into()));
                }
            }
            ExperimentKind::BiasP => {}
        }
        if let DataSource::Synthetic(s) = &self.data_source {
            s.validate()?;
        }
        Ok(())
    }

    /// Parses the flat config format; relative data paths resolve against `base`.
    pub fn parse(text: &str, base: Option<&Path>) -> Result<Self> {
        let mut kv = BTreeMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                Error::Parse(format!("line {}: expected `key = value`", lineno + 1))
            })?;
            let key = k.trim().to_ascii_lowercase();
            if kv.insert(key.clone(), v.trim().to_string()).is_some() {
                return Err(Error::Parse(format!("line {}: duplicate key {key:?}", lineno + 1)));
            }
        }
        let mut kv = Keys(kv);

        let kind: ExperimentKind = kv.required("kind")?.parse()?;
        let noise = parse_noise(&mut kv)?;
        let mut cfg = Self::new(kind, noise);

        let seed_stream = kv.parse::<u64>("synthetic.seed")?.unwrap_or(0);
        let branching = kv.list::<usize>("synthetic.branching")?;
        let leaf_range = kv.list::<u64>("synthetic.leaf_range")?;
        let pin = kv.parse::<bool>("synthetic.pin_min_leaf")?;
        match kv.take("data_source").as_deref() {
            None | Some("synthetic") => {
                let DataSource::Synthetic(mut s) = cfg.data_source.clone() else {
                    unreachable!()
                };
                if let Some(b) = branching {
                    s.branching = b;
                }
                if let Some(r) = leaf_range {
                    if r.len() != 2 {
                        return Err(Error::Parse("synthetic.leaf_range needs two values".into()));
                    }
                    s.leaf_range = (r[0], r[1]);
                }
                s.stream = RngStream::new(seed_stream, 0);
                s.pin_min_leaf = pin.unwrap_or(false);
                cfg.data_source = DataSource::Synthetic(s);
            }
            Some(path) => {
                if branching.is_some() || leaf_range.is_some() || pin.is_some() {
                    return Err(Error::Parse(
                        "synthetic.* keys given with a file data_source".into(),
                    ));
                }
                let p = PathBuf::from(path);
                cfg.data_source = DataSource::File(match base {
                    Some(b) if p.is_relative() => b.join(p),
                    _ => p,
                });
            }
        }
        if let Some(t) = kv.parse("trials")? {
            cfg.trials = t;
        }
        if let Some(s) = kv.parse("master_seed")? {
            cfg.master_seed = s;
        }
        if let Some(s) = kv.list("shift_factors")? {
            cfg.shift_factors = s;
        }
        if let Some(d) = kv.list("dimensions")? {
            cfg.dimensions = d;
        }
        if let Some(b) = kv.parse("leaves_only")? {
            cfg.leaves_only = b;
        }
        cfg.c_prime = kv.parse("c_prime")?;
        if let Some(b) = kv.parse("bootstrap")? {
            cfg.bootstrap = b;
        }
        if let Some(b) = kv.parse("write_residuals")? {
            cfg.write_residuals = b;
        }
        if let Some(o) = kv.take("output_dir") {
            cfg.output_dir = PathBuf::from(o);
        }
        if let Some(k) = kv.0.keys().next() {
            return Err(Error::Parse(format!("unknown key {k:?}")));
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text, path.parent())
    }
}

struct Keys(BTreeMap<String, String>);

impl Keys {
    fn take(&mut self, key: &str) -> Option<String> {
        self.0.remove(key)
    }

    fn required(&mut self, key: &str) -> Result<String> {
        self.take(key)
            .ok_or_else(|| Error::Parse(format!("missing required key {key:?}")))
    }

    fn parse<T: FromStr>(&mut self, key: &str) -> Result<Option<T>>
    where
        T::Err: fmt::Display,
    {
        self.take(key)
            .map(|v| {
                v.parse::<T>()
                    .map_err(|e| Error::Parse(format!("{key}: bad value {v:?}: {e}")))
            })
            .transpose()
    }

    fn list<T: FromStr>(&mut self, key: &str) -> Result<Option<Vec<T>>>
    where
        T::Err: fmt::Display,
    {
        self.take(key)
            .map(|v| {
                v.split(',')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(|s| {
                        s.parse::<T>()
                            .map_err(|e| Error::Parse(format!("{key}: bad entry {s:?}: {e}")))
                    })
                    .collect()
            })
            .transpose()
    }
}

fn parse_noise(kv: &mut Keys) -> Result<NoiseSpec> {
    let family = kv.required("noise")?.to_ascii_lowercase();
    let scale: Option<f64> = kv.parse("noise.scale")?;
    let sens: Option<f64> = kv.parse("noise.sensitivity")?;
    let eps: Option<f64> = kv.parse("noise.epsilon")?;
    let geometric = match family.as_str() {
        "laplace" => false,
        "geometric" | "two_sided_geometric" => true,
        other => return Err(Error::Parse(format!("unknown noise family {other:?}"))),
    };
    match (scale, sens, eps) {
        (Some(s), None, None) if geometric => NoiseSpec::geometric(s),
        (Some(s), None, None) => NoiseSpec::laplace(s),
        (None, Some(d), Some(e)) if geometric => NoiseSpec::geometric_mechanism(d, e),
        (None, Some(d), Some(e)) => NoiseSpec::laplace_mechanism(d, e),
        _ => Err(Error::Parse(
            "give either noise.scale or both noise.sensitivity and noise.epsilon".into(),
        )),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const FULL: &str = "
        # bias of the affine projection
        kind = bias_P
        data_source = synthetic
        synthetic.branching = 2,3
        synthetic.leaf_range = 5, 20
        synthetic.seed = 7
        noise = laplace
        noise.sensitivity = 1
        noise.epsilon = 0.5
        trials = 2000
        master_seed = 42
        output_dir = out   # trailing comment
    ";

    #[test]
    fn parses_full_config() {
        let cfg = ExperimentConfig::parse(FULL, None).unwrap();
        assert_eq!(cfg.kind, ExperimentKind::BiasP);
        assert_eq!(cfg.noise.scale(), 2.0);
        assert_eq!(cfg.trials, 2000);
        assert_eq!(cfg.master_seed, 42);
        assert_eq!(cfg.output_dir, PathBuf::from("out"));
        let DataSource::Synthetic(s) = &cfg.data_source else { panic!() };
        assert_eq!(s.branching, vec![2, 3]);
        assert_eq!(s.leaf_range, (5, 20));
        assert_eq!(s.stream, RngStream::new(7, 0));
    }

    #[test]
    fn file_source_resolves_relative_paths() {
        let text = "kind = bias_p\ndata_source = h.csv\nnoise = laplace\nnoise.scale = 1";
        let cfg = ExperimentConfig::parse(text, Some(Path::new("/data"))).unwrap();
        assert_eq!(cfg.data_source, DataSource::File(PathBuf::from("/data/h.csv")));
    }

    #[test]
    fn rejects_invalid_configs() {
        let base = "kind = bias_P\nnoise = laplace\nnoise.scale = 1\n";
        for bad in [
            format!("{base}trials = 1"),
            format!("{base}bogus = 3"),
            format!("{base}trials = x"),
            "kind = nope\nnoise = laplace\nnoise.scale = 1".to_string(),
            "kind = bias_P\nnoise = laplace".to_string(),
            "kind = bias_P\nnoise = laplace\nnoise.scale = -1".to_string(),
            "kind = bias_Pplus_shift\nnoise = laplace\nnoise.scale = 1".to_string(),
            "kind = variance_PS\nnoise = laplace\nnoise.scale = 1\ndimensions = 15".to_string(),
            "kind = bias_P\nkind = bias_P\nnoise = laplace\nnoise.scale = 1".to_string(),
            format!("{base}no equals sign"),
        ] {
            assert!(ExperimentConfig::parse(&bad, None).is_err(), "{bad}");
        }
    }

    #[test]
    fn kind_names_roundtrip() {
        for k in [
            ExperimentKind::BiasP,
            ExperimentKind::BiasPplusShift,
            ExperimentKind::ConvergencePs,
            ExperimentKind::VariancePs,
            ExperimentKind::BoundCheck,
        ] {
            assert_eq!(k.name().parse::<ExperimentKind>().unwrap(), k);
            assert_eq!(serde_json::to_string(&k).unwrap(), format!("\"{}\"", k.name()));
        }
    }
}
