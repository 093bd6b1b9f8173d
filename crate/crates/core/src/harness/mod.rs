//! Monte Carlo experiments: noise, then projection, then metrics, repeated
//! over independent trials.
//!
//! Trial `t` of series `s` draws from stream `(master_seed, s << 40 | t)`.
//! Trials run on a worker pool in fixed-size chunks; each chunk is collected
//! in trial order and reduced sequentially, so a report does not depend on
//! the number of workers.

mod config;
mod output;
mod report;
mod synthetic;

pub use config::{DataSource, ExperimentConfig, ExperimentKind, MIN_TRIALS};
pub use output::{CsvSink, NullSink, ResidualSink};
pub use report::{
    BiasSection, BoundRow, ExperimentReport, Gate, InstanceSummary, ShiftRow, SolverSummary,
    VarianceRatio, VarianceRow, WassersteinRow,
};
pub use synthetic::{generate_synthetic_hierarchy, SyntheticHierarchySpec};

use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;

use crate::analysis::{bias_bound, marginal_error_variance, sup_distance_cprime, BiasBoundInputs};
use crate::constraints::{check_feasible, hierarchy_to_system, io::read_hierarchy, Hierarchy};
use crate::error::{Error, Result};
use crate::metrics::{
    variance_with_se, wasserstein1_bootstrap_se, wasserstein1_sorted, BiasAccumulator,
    BiasEstimate,
};
use crate::noise::{sample_vector, NoiseFamily, NoiseSpec, RngStream};
use crate::projection::{project_sum, Projector, SolverOptions};

const CHUNK: usize = 4096;
/// Two-sided normal tail beyond 4 standard deviations.
const TAIL_4SE: f64 = 6.334e-5;

/// Stream of trial `trial` in series `series`.
pub fn trial_stream(master_seed: u64, series: u64, trial: usize) -> RngStream {
    RngStream::new(master_seed, (series << 40) | trial as u64)
}

/// A fixed-size worker pool.
pub struct Runner {
    pool: rayon::ThreadPool,
}

impl Runner {
    pub fn new(workers: usize) -> Result<Self> {
        if workers == 0 {
            return Err(Error::Domain("workers must be >= 1".into()));
        }
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .map_err(|e| Error::Domain(format!("cannot start worker pool: {e}")))?;
        Ok(Self { pool })
    }

    pub fn workers(&self) -> usize {
        self.pool.current_num_threads()
    }

    /// Runs `trial(0..trials)` in parallel and hands results to `consume` in
    /// trial order.
    pub fn run<T, F, C>(&self, trials: usize, trial: F, mut consume: C) -> Result<()>
    where
        T: Send,
        F: Fn(usize) -> Result<T> + Sync,
        C: FnMut(usize, T) -> Result<()>,
    {
        let mut start = 0;
        while start < trials {
            let end = (start + CHUNK).min(trials);
            let chunk: Vec<Result<T>> =
                self.pool.install(|| (start..end).into_par_iter().map(&trial).collect());
            for (t, r) in (start..end).zip(chunk) {
                consume(t, r?)?;
            }
            start = end;
        }
        Ok(())
    }
}

/// Outcome of repeated noise-then-project trials on one instance.
#[derive(Debug, Clone)]
pub struct BiasRun {
    pub projected: BiasEstimate,
    pub control: BiasEstimate,
    pub solver: SolverSummary,
}

/// Adds noise to `truth` on trial streams of series 0, projects, and
/// estimates the bias of the residual `x_hat - x` alongside that of the raw
/// noise. Every projected output is re-checked for feasibility.
#[allow(clippy::too_many_arguments)]
pub fn bias_trials(
    projector: &Projector,
    truth: &[f64],
    noise: &NoiseSpec,
    trials: usize,
    master_seed: u64,
    runner: &Runner,
    label: &str,
    sink: &mut dyn ResidualSink,
) -> Result<BiasRun> {
    let n = truth.len();
    let sys = projector.system();
    let mut projected = BiasAccumulator::new(n);
    let mut control = BiasAccumulator::new(n);
    let mut solver = SolverSummary::default();
    let opts = SolverOptions::default();
    runner.run(
        trials,
        |t| {
            let mut rng = trial_stream(master_seed, 0, t).rng();
            let mut eta = vec![0.0; n];
            noise.fill(&mut rng, &mut eta);
            let noisy: Vec<f64> = truth.iter().zip(&eta).map(|(x, e)| x + e).collect();
            let res = projector.project(&noisy)?;
            let violations = check_feasible(&res.solution, sys, opts.eps_for(&noisy))?;
            if let Some(v) = violations.first() {
                return Err(Error::NotConverged {
                    iterations: res.iterations,
                    residual: v.residual,
                    last_iterate: res.solution,
                });
            }
            let residual: Vec<f64> = res.solution.iter().zip(truth).map(|(v, x)| v - x).collect();
            let min = res.solution.iter().copied().fold(f64::INFINITY, f64::min);
            Ok((residual, eta, res.iterations, res.residual_inf, min, res.active_nonneg))
        },
        |t, (residual, eta, it, resid, min, active)| {
            projected.push(&residual);
            control.push(&eta);
            solver.absorb(it, resid, min, active);
            sink.record(label, t, &residual)?;
            if label == "projected" {
                sink.record("control", t, &eta)?;
            }
            Ok(())
        },
    )?;
    Ok(BiasRun {
        projected: projected.finish()?,
        control: control.finish()?,
        solver,
    })
}

/// Samples of the first coordinate's residual after projecting
/// `Lap(scale)^dim` noise onto a sum constraint, one per trial of `series`.
pub fn sum_projection_residuals(
    scale: f64,
    dim: usize,
    trials: usize,
    master_seed: u64,
    series: u64,
    runner: &Runner,
) -> Result<Vec<f64>> {
    let noise = NoiseSpec::laplace(scale)?;
    let mut out = Vec::with_capacity(trials);
    runner.run(
        trials,
        |t| {
            let mut rng = trial_stream(master_seed, series, t).rng();
            let mut eta = vec![0.0; dim];
            noise.fill(&mut rng, &mut eta);
            // true data 0 with public total 0: the residual is the output
            Ok(project_sum(&eta, 0.0)?.solution[0])
        },
        |_, v| {
            out.push(v);
            Ok(())
        },
    )?;
    Ok(out)
}

pub fn load_instance(cfg: &ExperimentConfig) -> Result<Hierarchy> {
    match &cfg.data_source {
        DataSource::Synthetic(spec) => generate_synthetic_hierarchy(spec),
        DataSource::File(path) => read_hierarchy(path),
    }
}

fn bonferroni_note(dim: usize) -> String {
    format!(
        "per-coordinate gate at 4 standard errors; over {dim} coordinates the family-wise \
         false-alarm rate is at most {:.2e}",
        (dim as f64 * 2.0 * TAIL_4SE).min(1.0)
    )
}

fn laplace_bound(noise: &NoiseSpec, r_m: f64, dim: usize, c_prime: Option<f64>) -> Option<f64> {
    if noise.family() != NoiseFamily::Laplace {
        return None;
    }
    let inp = BiasBoundInputs::new(r_m.max(0.0), noise.scale(), dim, c_prime?).ok()?;
    Some(bias_bound(inp))
}

/// `bias_P` and `bias_Pplus_shift`.
pub fn run_bias_experiment(
    cfg: &ExperimentConfig,
    runner: &Runner,
    sink: &mut dyn ResidualSink,
) -> Result<ExperimentReport> {
    cfg.validate()?;
    let h = load_instance(cfg)?;
    let mut report = ExperimentReport::new(cfg.clone());
    match cfg.kind {
        ExperimentKind::BiasP => {
            let (sys, map) = hierarchy_to_system(&h, cfg.leaves_only)?;
            let sys = sys.with_nonneg(false);
            let truth = map.values(&h);
            report.instance = Some(instance_summary(&sys, &truth, h.root().count));
            let projector = Projector::new(&sys, SolverOptions::default())?;
            let run = bias_trials(
                &projector,
                &truth,
                &cfg.noise,
                cfg.trials,
                cfg.master_seed,
                runner,
                "projected",
                sink,
            )?;
            report.gates.push(zero_gate("projected_bias_zero_4se", &run.projected));
            report.gates.push(zero_gate("control_bias_zero_4se", &run.control));
            report.solver = run.solver;
            report.bias = Some(BiasSection {
                bonferroni_note: bonferroni_note(truth.len()),
                projected: run.projected,
                control: run.control,
                gate_sigmas: 4.0,
            });
        }
        ExperimentKind::BiasPplusShift => {
            for &shift in &cfg.shift_factors {
                let hs = h.shift_leaves(shift)?;
                let (sys, map) = hierarchy_to_system(&hs, cfg.leaves_only)?;
                let truth = map.values(&hs);
                if report.instance.is_none() {
                    report.instance = Some(instance_summary(&sys, &truth, hs.root().count));
                }
                let r_m = truth.iter().copied().fold(f64::INFINITY, f64::min);
                let c_prime = cfg.c_prime.or_else(|| sup_distance_cprime(&sys, &truth).ok());
                let projector = Projector::new(&sys, SolverOptions::default())?;
                let run = bias_trials(
                    &projector,
                    &truth,
                    &cfg.noise,
                    cfg.trials,
                    cfg.master_seed,
                    runner,
                    &format!("shift={shift}"),
                    sink,
                )?;
                report.solver.merge(&run.solver);
                let est = run.projected;
                let argmax = est.argmax_abs();
                report.shift_sweep.push(ShiftRow {
                    shift,
                    r_m,
                    max_abs_bias: est.max_abs(),
                    argmax,
                    std_error_at_max: est.std_error[argmax],
                    zero_within_4se: est.is_zero_within(4.0),
                    bound: laplace_bound(&cfg.noise, r_m, truth.len(), c_prime),
                    estimate: est,
                });
            }
            report.gates.push(nonincreasing_gate(&report.shift_sweep));
            let last = report.shift_sweep.last().expect("validated non-empty");
            report.gates.push(Gate::new(
                "bias_zero_at_largest_shift",
                last.zero_within_4se,
                format!(
                    "shift {}: max |bias| {:.6} with se {:.6}",
                    last.shift, last.max_abs_bias, last.std_error_at_max
                ),
            ));
        }
        other => {
            return Err(Error::Domain(format!("{other} is not a bias experiment")));
        }
    }
    Ok(report)
}

fn instance_summary(sys: &crate::LinearSystem, truth: &[f64], total: f64) -> InstanceSummary {
    InstanceSummary {
        dim: sys.n(),
        rows: sys.m(),
        r_m: truth.iter().copied().fold(f64::INFINITY, f64::min),
        total,
    }
}

fn zero_gate(name: &str, est: &BiasEstimate) -> Gate {
    let failing = est.failing(4.0);
    Gate::new(
        name,
        failing.is_empty(),
        if failing.is_empty() {
            format!("all {} coordinates within 4 standard errors", est.mean.len())
        } else {
            format!("coordinates beyond 4 standard errors: {failing:?}")
        },
    )
}

/// Each step may rise by at most 2 combined standard errors.
fn nonincreasing_gate(rows: &[ShiftRow]) -> Gate {
    let mut bad = Vec::new();
    for w in rows.windows(2) {
        let slack = 2.0 * w[0].std_error_at_max.hypot(w[1].std_error_at_max);
        if w[1].max_abs_bias > w[0].max_abs_bias + slack {
            bad.push(format!("{} -> {}", w[0].shift, w[1].shift));
        }
    }
    Gate::new(
        "bias_nonincreasing_2se",
        bad.is_empty(),
        if bad.is_empty() {
            "max |bias| non-increasing across shifts within 2 standard errors".into()
        } else {
            format!("increases at {}", bad.join(", "))
        },
    )
}

/// Strictly decreasing, allowing one adjacent inversion within 2 standard errors.
pub fn decreasing_with_one_inversion(values: &[f64], std_errors: &[f64]) -> bool {
    let mut inversions = 0;
    for k in 1..values.len() {
        if values[k] < values[k - 1] {
            continue;
        }
        inversions += 1;
        let slack = 2.0 * std_errors[k].hypot(std_errors[k - 1]);
        if inversions > 1 || values[k] - values[k - 1] > slack {
            return false;
        }
    }
    true
}

/// `convergence_PS`: Wasserstein distance between sum-projection residuals
/// and fresh Laplace draws, and the residual variance, per dimension.
pub fn run_convergence_experiment(
    cfg: &ExperimentConfig,
    runner: &Runner,
    sink: &mut dyn ResidualSink,
) -> Result<ExperimentReport> {
    cfg.validate()?;
    if cfg.kind != ExperimentKind::ConvergencePs {
        return Err(Error::Domain(format!("{} is not a convergence experiment", cfg.kind)));
    }
    let scale = cfg.noise.scale();
    let mut report = ExperimentReport::new(cfg.clone());
    for (k, &dim) in cfg.dimensions.iter().enumerate() {
        let k = k as u64;
        let mut residuals =
            sum_projection_residuals(scale, dim, cfg.trials, cfg.master_seed, 1 + k, runner)?;
        for (t, v) in residuals.iter().enumerate() {
            sink.record(&format!("n={dim}"), t, std::slice::from_ref(v))?;
        }
        report.variances.push(variance_row(&residuals, scale, dim)?);
        let mut fresh =
            sample_vector(&cfg.noise, cfg.trials, trial_stream(cfg.master_seed, 1000 + k, 0))?;
        residuals.sort_by(f64::total_cmp);
        fresh.sort_by(f64::total_cmp);
        let distance = wasserstein1_sorted(&residuals, &fresh);
        let bootstrap_se = wasserstein1_bootstrap_se(
            &residuals,
            &fresh,
            cfg.bootstrap,
            trial_stream(cfg.master_seed, 2000 + k, 0),
        )?;
        report.wasserstein.push(WassersteinRow {
            dim,
            distance,
            bootstrap_se,
        });
    }
    let d: Vec<f64> = report.wasserstein.iter().map(|w| w.distance).collect();
    let se: Vec<f64> = report.wasserstein.iter().map(|w| w.bootstrap_se).collect();
    report.gates.push(Gate::new(
        "wasserstein_decreasing",
        decreasing_with_one_inversion(&d, &se),
        format!("distances {d:?}"),
    ));
    report.gates.push(variance_gate(&report.variances));
    Ok(report)
}

fn variance_row(samples: &[f64], scale: f64, dim: usize) -> Result<VarianceRow> {
    let (empirical, std_error) = variance_with_se(samples)?;
    let analytical = marginal_error_variance(scale, dim)?;
    Ok(VarianceRow {
        dim,
        empirical,
        std_error,
        analytical,
        within_3se: (empirical - analytical).abs() <= 3.0 * std_error,
    })
}

fn variance_gate(rows: &[VarianceRow]) -> Gate {
    let bad: Vec<usize> = rows.iter().filter(|r| !r.within_3se).map(|r| r.dim).collect();
    Gate::new(
        "variance_within_3se",
        bad.is_empty(),
        if bad.is_empty() {
            "empirical variance within 3 standard errors of 2 lambda^2 (1 - 1/n)".into()
        } else {
            format!("outside 3 standard errors at n = {bad:?}")
        },
    )
}

/// `variance_PS`: residual variances of two dimensions and their ratio.
pub fn run_variance_experiment(
    cfg: &ExperimentConfig,
    runner: &Runner,
    sink: &mut dyn ResidualSink,
) -> Result<ExperimentReport> {
    cfg.validate()?;
    if cfg.kind != ExperimentKind::VariancePs {
        return Err(Error::Domain(format!("{} is not a variance experiment", cfg.kind)));
    }
    let scale = cfg.noise.scale();
    let mut report = ExperimentReport::new(cfg.clone());
    for (k, &dim) in cfg.dimensions.iter().enumerate() {
        let residuals =
            sum_projection_residuals(scale, dim, cfg.trials, cfg.master_seed, 1 + k as u64, runner)?;
        for (t, v) in residuals.iter().enumerate() {
            sink.record(&format!("n={dim}"), t, std::slice::from_ref(v))?;
        }
        report.variances.push(variance_row(&residuals, scale, dim)?);
    }
    let (a, b) = (&report.variances[0], &report.variances[1]);
    let analytical = if b.analytical == 0.0 {
        if a.analytical == 0.0 { 1.0 } else { f64::INFINITY }
    } else {
        a.analytical / b.analytical
    };
    report.variance_ratio = Some(VarianceRatio {
        analytical,
        empirical: a.empirical / b.empirical,
        analytical_gap: 1.0 - analytical,
    });
    report.gates.push(variance_gate(&report.variances));
    Ok(report)
}

/// `bound_check`: bias bound of the non-negative projection against its
/// Monte Carlo bias.
pub fn run_bound_check(
    cfg: &ExperimentConfig,
    runner: &Runner,
    sink: &mut dyn ResidualSink,
) -> Result<ExperimentReport> {
    cfg.validate()?;
    if cfg.kind != ExperimentKind::BoundCheck {
        return Err(Error::Domain(format!("{} is not a bound check", cfg.kind)));
    }
    let h = load_instance(cfg)?;
    let (sys, map) = hierarchy_to_system(&h, cfg.leaves_only)?;
    let truth = map.values(&h);
    let mut report = ExperimentReport::new(cfg.clone());
    let summary = instance_summary(&sys, &truth, h.root().count);
    let r_m = summary.r_m;
    report.instance = Some(summary);

    let c_prime = match cfg.c_prime {
        Some(c) => c,
        None => sup_distance_cprime(&sys, &truth)?,
    };
    let bound = bias_bound(BiasBoundInputs::new(r_m, cfg.noise.scale(), truth.len(), c_prime)?);

    let projector = Projector::new(&sys, SolverOptions::default())?;
    let run = bias_trials(
        &projector,
        &truth,
        &cfg.noise,
        cfg.trials,
        cfg.master_seed,
        runner,
        "projected",
        sink,
    )?;
    let est = &run.projected;
    let measured_upper = est
        .mean
        .iter()
        .zip(&est.std_error)
        .map(|(m, se)| m.abs() + 3.0 * se)
        .fold(0.0, f64::max);
    report.gates.push(Gate::new(
        "bound_dominates_bias",
        measured_upper <= bound,
        format!("max_i |bias_i| + 3 se_i = {measured_upper:.6} vs bound {bound:.6}"),
    ));
    report.bound = Some(BoundRow {
        r_m,
        c_prime,
        dim: truth.len(),
        scale: cfg.noise.scale(),
        bound,
        measured_max_abs_bias: est.max_abs(),
        measured_upper,
    });
    report.solver = run.solver;
    report.bias = Some(BiasSection {
        bonferroni_note: bonferroni_note(truth.len()),
        projected: run.projected,
        control: run.control,
        gate_sigmas: 4.0,
    });
    Ok(report)
}

/// Dispatches on the experiment kind.
pub fn run_experiment(
    cfg: &ExperimentConfig,
    runner: &Runner,
    sink: &mut dyn ResidualSink,
) -> Result<ExperimentReport> {
    let start = Instant::now();
    let mut report = match cfg.kind {
        ExperimentKind::BiasP | ExperimentKind::BiasPplusShift => {
            run_bias_experiment(cfg, runner, sink)?
        }
        ExperimentKind::ConvergencePs => run_convergence_experiment(cfg, runner, sink)?,
        ExperimentKind::VariancePs => run_variance_experiment(cfg, runner, sink)?,
        ExperimentKind::BoundCheck => run_bound_check(cfg, runner, sink)?,
    };
    sink.flush()?;
    report.wall_time = start.elapsed();
    Ok(report)
}

/// Runs `cfg` and writes `report.json`, `summary.csv` and (unless disabled)
/// `residuals.csv` into `out_dir`.
pub fn execute(cfg: &ExperimentConfig, workers: usize, out_dir: &Path) -> Result<ExperimentReport> {
    cfg.validate()?;
    std::fs::create_dir_all(out_dir)?;
    let runner = Runner::new(workers)?;
    let report = if cfg.write_residuals {
        let mut sink = CsvSink::create(&out_dir.join("residuals.csv"))?;
        run_experiment(cfg, &runner, &mut sink)?
    } else {
        run_experiment(cfg, &runner, &mut NullSink)?
    };
    std::fs::write(out_dir.join("report.json"), report.to_json())?;
    std::fs::write(out_dir.join("summary.csv"), report.summary_csv())?;
    Ok(report)
}
