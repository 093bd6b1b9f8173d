use std::fmt::Write as _;
use std::time::Duration;

use serde::Serialize;

use super::config::ExperimentConfig;
use crate::metrics::BiasEstimate;

/// A pass/fail acceptance check.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Gate {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

impl Gate {
    pub fn new(name: &str, pass: bool, detail: String) -> Self {
        Self {
            name: name.to_string(),
            pass,
            detail,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InstanceSummary {
    pub dim: usize,
    pub rows: usize,
    /// Smallest true count.
    pub r_m: f64,
    pub total: f64,
}

/// Aggregate projection diagnostics over all trials.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct SolverSummary {
    pub projections: usize,
    pub total_iterations: usize,
    pub max_iterations: usize,
    pub max_residual_inf: f64,
    pub min_value: Option<f64>,
    pub max_active_nonneg: usize,
}

impl SolverSummary {
    pub(crate) fn absorb(&mut self, iterations: usize, residual_inf: f64, min_value: f64, active: usize) {
        self.projections += 1;
        self.total_iterations += iterations;
        self.max_iterations = self.max_iterations.max(iterations);
        self.max_residual_inf = self.max_residual_inf.max(residual_inf);
        self.min_value = Some(self.min_value.map_or(min_value, |m| m.min(min_value)));
        self.max_active_nonneg = self.max_active_nonneg.max(active);
    }

    pub(crate) fn merge(&mut self, other: &SolverSummary) {
        self.projections += other.projections;
        self.total_iterations += other.total_iterations;
        self.max_iterations = self.max_iterations.max(other.max_iterations);
        self.max_residual_inf = self.max_residual_inf.max(other.max_residual_inf);
        self.min_value = match (self.min_value, other.min_value) {
            (Some(a), Some(b)) => Some(a.min(b)),
            (a, b) => a.or(b),
        };
        self.max_active_nonneg = self.max_active_nonneg.max(other.max_active_nonneg);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BiasSection {
    /// Residuals `x_hat - x` of the post-processed output.
    pub projected: BiasEstimate,
    /// The raw noise, without post-processing.
    pub control: BiasEstimate,
    pub gate_sigmas: f64,
    pub bonferroni_note: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ShiftRow {
    pub shift: f64,
    pub r_m: f64,
    pub max_abs_bias: f64,
    pub argmax: usize,
    pub std_error_at_max: f64,
    pub zero_within_4se: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bound: Option<f64>,
    pub estimate: BiasEstimate,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VarianceRow {
    pub dim: usize,
    pub empirical: f64,
    pub std_error: f64,
    pub analytical: f64,
    pub within_3se: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VarianceRatio {
    pub analytical: f64,
    pub empirical: f64,
    /// `1 - analytical ratio`.
    pub analytical_gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WassersteinRow {
    pub dim: usize,
    pub distance: f64,
    pub bootstrap_se: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundRow {
    pub r_m: f64,
    pub c_prime: f64,
    pub dim: usize,
    pub scale: f64,
    pub bound: f64,
    pub measured_max_abs_bias: f64,
    /// `max_i (|mean_i| + 3 se_i)`.
    pub measured_upper: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentReport {
    pub config: ExperimentConfig,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub instance: Option<InstanceSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bias: Option<BiasSection>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub shift_sweep: Vec<ShiftRow>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub variances: Vec<VarianceRow>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub variance_ratio: Option<VarianceRatio>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub wasserstein: Vec<WassersteinRow>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bound: Option<BoundRow>,
    pub solver: SolverSummary,
    pub gates: Vec<Gate>,
    /// Kept out of `report.json` so reports are reproducible byte for byte.
    #[serde(skip)]
    pub wall_time: Duration,
}

impl ExperimentReport {
    pub(crate) fn new(config: ExperimentConfig) -> Self {
        Self {
            config,
            instance: None,
            bias: None,
            shift_sweep: Vec::new(),
            variances: Vec::new(),
            variance_ratio: None,
            wasserstein: Vec::new(),
            bound: None,
            solver: SolverSummary::default(),
            gates: Vec::new(),
            wall_time: Duration::ZERO,
        }
    }

    pub fn passed(&self) -> bool {
        self.gates.iter().all(|g| g.pass)
    }

    pub fn failing_gates(&self) -> Vec<&Gate> {
        self.gates.iter().filter(|g| !g.pass).collect()
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    /// `section,key,value` rows.
    pub fn summary_csv(&self) -> String {
        let mut out = String::from("section,key,value\n");
        let mut row = |section: &str, key: &str, value: String| {
            let _ = writeln!(out, "{section},{key},{value}");
        };
        row("experiment", "kind", self.config.kind.name().to_string());
        row("experiment", "trials", self.config.trials.to_string());
        if let Some(i) = &self.instance {
            row("instance", "dim", i.dim.to_string());
            row("instance", "r_m", i.r_m.to_string());
        }
        if let Some(b) = &self.bias {
            row("bias", "projected_max_abs", b.projected.max_abs().to_string());
            row("bias", "control_max_abs", b.control.max_abs().to_string());
        }
        for s in &self.shift_sweep {
            row("shift", &format!("max_abs_bias@{}", s.shift), s.max_abs_bias.to_string());
        }
        for v in &self.variances {
            row("variance", &format!("empirical@{}", v.dim), v.empirical.to_string());
            row("variance", &format!("analytical@{}", v.dim), v.analytical.to_string());
        }
        for w in &self.wasserstein {
            row("wasserstein", &format!("w1@{}", w.dim), w.distance.to_string());
        }
        if let Some(b) = &self.bound {
            row("bound", "bound", b.bound.to_string());
            row("bound", "measured_upper", b.measured_upper.to_string());
        }
        row("solver", "max_residual_inf", self.solver.max_residual_inf.to_string());
        for g in &self.gates {
            row("gate", &g.name, if g.pass { "pass" } else { "fail" }.to_string());
        }
        out
    }
}
