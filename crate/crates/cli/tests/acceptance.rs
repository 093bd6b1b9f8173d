//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any fails.

#[path = "../../core/tests/common/mod.rs"]
mod common;

use std::path::Path;
use std::process::{Command, ExitCode};
use std::time::Instant;

use common::*;
use postproc_core::analysis::{
    bias_bound, l1_ball_prob_geometric, l1_ball_prob_laplace, marginal_error_variance,
    sup_distance_cprime, BallProbabilityQuery, BiasBoundInputs,
};
use postproc_core::harness::{
    bias_trials, run_experiment, DataSource, ExperimentConfig, ExperimentKind, NullSink, Runner,
    SyntheticHierarchySpec,
};
use postproc_core::noise::{geometric_pmf, sample_vector};
use postproc_core::{
    project_affine, reflect, NoiseSpec, Projector, RngStream, SolverOptions,
};
use rand::Rng;

type Outcome = (bool, String);

/// `(P)` optimality: feasibility and `x_hat - x` orthogonal to `null(A)`.
fn kkt_residual(inst: &Instance, noisy: &[f64], sol: &[f64]) -> f64 {
    let d: Vec<f64> = sol.iter().zip(noisy).map(|(a, b)| a - b).collect();
    let feas = inst.system(false).residual_inf(sol).unwrap();
    feas.max(null_space_component(&inst.rows, &d))
}

fn ac1(kkt_worst: &mut f64) -> Outcome {
    let mut rng = rng(101);
    let noise = NoiseSpec::laplace(2.0).unwrap();
    let runner = Runner::new(1).unwrap();
    let mut details = Vec::new();
    let mut pass = true;
    for k in 0..5 {
        let n = rng.random_range(10..=50);
        let m = rng.random_range(1..=10);
        let inst = Instance::random(&mut rng, n, m, 0.0, 100.0);
        let projector = Projector::new(&inst.system(false), SolverOptions::default()).unwrap();
        let run = bias_trials(
            &projector,
            &inst.truth,
            &noise,
            10_000,
            500 + k,
            &runner,
            "projected",
            &mut NullSink,
        )
        .unwrap();
        let est = run.projected;
        let worst = est
            .mean
            .iter()
            .zip(&est.std_error)
            .map(|(m, s)| m.abs() / s)
            .fold(0.0, f64::max);
        pass &= est.is_zero_within(4.0);
        details.push(format!("n={n} m={m} max|mean|/se={worst:.2}"));

        let eta = sample_vector(&noise, n, RngStream::new(77, k)).unwrap();
        let noisy: Vec<f64> = inst.truth.iter().zip(&eta).map(|(a, b)| a + b).collect();
        let sol = projector.project(&noisy).unwrap().solution;
        *kkt_worst = kkt_worst.max(kkt_residual(&inst, &noisy, &sol));
    }
    (pass, details.join("; "))
}

fn ac2(kkt_worst: &mut f64) -> Outcome {
    let mut rng = rng(102);
    let (mut commute, mut antisym) = (0.0f64, 0.0f64);
    for k in 0..1000 {
        let n = rng.random_range(2..=30);
        let m = rng.random_range(1..n.min(10));
        let inst = Instance::random(&mut rng, n, m, 0.0, 50.0);
        let sys = inst.system(false);
        let noise = NoiseSpec::laplace(rng.random_range(0.5..5.0)).unwrap();
        let eta = sample_vector(&noise, n, RngStream::new(102, k)).unwrap();
        let noisy: Vec<f64> = inst.truth.iter().zip(&eta).map(|(a, b)| a + b).collect();
        let proj = project_affine(&noisy, &sys).unwrap().solution;
        let mirrored = reflect(&inst.truth, &noisy).unwrap();
        let proj_mirrored = project_affine(&mirrored, &sys).unwrap().solution;
        commute = commute.max(max_abs_diff(&proj_mirrored, &reflect(&inst.truth, &proj).unwrap()));
        for ((a, b), x) in proj.iter().zip(&proj_mirrored).zip(&inst.truth) {
            antisym = antisym.max(((a - x) + (b - x)).abs());
        }
        *kkt_worst = kkt_worst
            .max(kkt_residual(&inst, &noisy, &proj))
            .max(kkt_residual(&inst, &mirrored, &proj_mirrored));
    }
    (
        commute <= 1e-8 && antisym <= 1e-8,
        format!("1000 pairs, max commutation gap {commute:.2e}, max error sum {antisym:.2e}"),
    )
}

fn ac3() -> Outcome {
    let mut rng = rng(103);
    let (mut accepted, mut drawn, mut worst) = (0, 0u64, 0.0f64);
    while accepted < 600 {
        let n = rng.random_range(3..=8);
        let m = rng.random_range(1..n);
        let inst = Instance::random(&mut rng, n, m, 5.0, 20.0);
        let r_m = inst.truth.iter().copied().fold(f64::INFINITY, f64::min);
        let noise = NoiseSpec::laplace(r_m / n as f64).unwrap();
        let nonneg = Projector::new(&inst.system(true), SolverOptions::default()).unwrap();
        for _ in 0..4 {
            let eta = sample_vector(&noise, n, RngStream::new(103, drawn)).unwrap();
            drawn += 1;
            if eta.iter().map(|v| v.abs()).sum::<f64>() > r_m {
                continue;
            }
            let noisy: Vec<f64> = inst.truth.iter().zip(&eta).map(|(a, b)| a + b).collect();
            let a = project_affine(&noisy, &inst.system(false)).unwrap().solution;
            let b = nonneg.project(&noisy).unwrap().solution;
            worst = worst.max(max_abs_diff(&a, &b));
            accepted += 1;
        }
    }
    (
        worst <= 1e-6,
        format!("{accepted} samples inside the r_m ball ({drawn} drawn), max difference {worst:.2e}"),
    )
}

fn ac4() -> Outcome {
    let draws = 1_000_000;
    let noise = NoiseSpec::laplace(1.0).unwrap();
    let mut worst_mc = 0.0f64;
    for (i, n) in [1usize, 2, 3, 10].into_iter().enumerate() {
        for (j, r) in [0.5, 1.0, 2.0, 5.0].into_iter().enumerate() {
            let mut rng = RngStream::new(104, (i * 4 + j) as u64).rng();
            let mut buf = vec![0.0; n];
            let mut inside = 0usize;
            for _ in 0..draws {
                noise.fill(&mut rng, &mut buf);
                if buf.iter().map(|v| v.abs()).sum::<f64>() <= r {
                    inside += 1;
                }
            }
            let analytic = l1_ball_prob_laplace(BallProbabilityQuery::new(r, n, 1.0).unwrap());
            worst_mc = worst_mc.max((analytic - inside as f64 / draws as f64).abs());
        }
    }
    let mut worst_lattice = 0.0f64;
    for a in [0.3, 0.5, 0.8] {
        for n in 1..=3u32 {
            for r in 0..=6i64 {
                let side = (2 * r + 1) as usize;
                let mut brute = 0.0;
                for idx in 0..side.pow(n) {
                    let mut rest = idx;
                    let mut l1 = 0;
                    let mut p = 1.0;
                    for _ in 0..n {
                        let k = (rest % side) as i64 - r;
                        rest /= side;
                        l1 += k.abs();
                        p *= geometric_pmf(k, a);
                    }
                    if l1 <= r {
                        brute += p;
                    }
                }
                let got = l1_ball_prob_geometric(r as u64, a, n as usize).unwrap();
                worst_lattice = worst_lattice.max((got - brute).abs());
            }
        }
    }
    (
        worst_mc <= 0.003 && worst_lattice <= 1e-10,
        format!("Laplace max |analytic - MC| {worst_mc:.5} over 16 cases; geometric max |formula - lattice| {worst_lattice:.2e}"),
    )
}

fn ac5() -> Outcome {
    let mut cfg = ExperimentConfig::new(ExperimentKind::VariancePs, NoiseSpec::laplace(10.0).unwrap());
    cfg.dimensions = vec![15, 254];
    cfg.trials = 80_000;
    cfg.master_seed = 105;
    let report = run_experiment(&cfg, &Runner::new(1).unwrap(), &mut NullSink).unwrap();
    let a15 = format!("{:.2}", marginal_error_variance(10.0, 15).unwrap());
    let a254 = format!("{:.2}", marginal_error_variance(10.0, 254).unwrap());
    let rows: Vec<String> = report
        .variances
        .iter()
        .map(|r| format!("n={} empirical {:.2} +- {:.2}", r.dim, r.empirical, r.std_error))
        .collect();
    let ratio = report.variance_ratio.as_ref().unwrap();
    (
        a15 == "186.67" && a254 == "199.21" && report.passed(),
        format!(
            "analytical {a15} / {a254}; {}; variance gap {:.1}%",
            rows.join(", "),
            100.0 * ratio.analytical_gap
        ),
    )
}

fn ac6() -> Outcome {
    let mut cfg = ExperimentConfig::new(ExperimentKind::ConvergencePs, NoiseSpec::laplace(1.0).unwrap());
    cfg.dimensions = vec![2, 5, 10, 50, 200];
    cfg.trials = 100_000;
    cfg.master_seed = 106;
    let report = run_experiment(&cfg, &Runner::new(1).unwrap(), &mut NullSink).unwrap();
    let gate = report.gates.iter().find(|g| g.name == "wasserstein_decreasing").unwrap();
    let rows: Vec<String> = report
        .wasserstein
        .iter()
        .map(|w| format!("n={} {:.4}+-{:.4}", w.dim, w.distance, w.bootstrap_se))
        .collect();
    (gate.pass, format!("W1 {}", rows.join(", ")))
}

/// 33 counties summing to `total`, smallest exactly 348.
fn county_csv(total: u64) -> String {
    let rest = total - 348;
    let weights: u64 = (1..=32).sum();
    let mut counts = vec![348u64];
    counts.extend((1..=32).map(|w| rest * w / weights));
    let assigned: u64 = counts.iter().sum();
    counts[32] += total - assigned;
    let mut csv = format!("id,parent_id,count\nstate,,{total}\n");
    for (i, c) in counts.iter().enumerate() {
        csv.push_str(&format!("county{i:02},state,{c}\n"));
    }
    csv
}

fn ac7(dir: &Path) -> Outcome {
    let path = dir.join("state.csv");
    std::fs::write(&path, county_csv(7_289_112)).unwrap();
    let mut cfg = ExperimentConfig::new(ExperimentKind::BoundCheck, NoiseSpec::laplace(5.0).unwrap());
    cfg.data_source = DataSource::File(path);
    cfg.leaves_only = true;
    cfg.master_seed = 107;
    let report = run_experiment(&cfg, &Runner::new(1).unwrap(), &mut NullSink).unwrap();
    let b = report.bound.as_ref().unwrap();

    let cal = postproc_core::constraints::io::parse_hierarchy_csv(&county_csv(750_000)).unwrap();
    let (sys, map) = postproc_core::hierarchy_to_system(&cal, true).unwrap();
    let x = map.values(&cal);
    let c_prime = sup_distance_cprime(&sys, &x).unwrap();
    let r_m = x.iter().copied().fold(f64::INFINITY, f64::min);
    let calibrated = bias_bound(BiasBoundInputs::new(r_m, 5.0, x.len(), c_prime).unwrap());
    (
        report.passed() && b.r_m == 348.0 && b.dim == 33 && calibrated <= 0.35,
        format!(
            "33 counties, r_m={}, C'={}: bound {:.4} vs |bias|+3se {:.4}; calibrated instance (total 750000) bound {calibrated:.4}",
            b.r_m, b.c_prime, b.bound, b.measured_upper
        ),
    )
}

fn ac8() -> Outcome {
    let lambda = 1.0;
    let mut cfg =
        ExperimentConfig::new(ExperimentKind::BiasPplusShift, NoiseSpec::laplace(lambda).unwrap());
    cfg.data_source = DataSource::Synthetic(SyntheticHierarchySpec {
        branching: vec![2, 2],
        leaf_range: (0, 10),
        stream: RngStream::new(108, 0),
        pin_min_leaf: true,
    });
    let n = 7.0;
    cfg.shift_factors = vec![0.0, 2.0 * lambda, 5.0 * lambda, 20.0 * lambda * n];
    cfg.master_seed = 108;
    let report = run_experiment(&cfg, &Runner::new(1).unwrap(), &mut NullSink).unwrap();
    assert_eq!(report.instance.as_ref().unwrap().dim, 7);
    let rows: Vec<String> = report
        .shift_sweep
        .iter()
        .map(|r| format!("r_m={} {:.4}+-{:.4}", r.r_m, r.max_abs_bias, r.std_error_at_max))
        .collect();
    (report.passed(), format!("max |bias| {}", rows.join(", ")))
}

fn ac9(kkt_worst: &mut f64) -> Outcome {
    let mut rng = rng(109);
    let mut worst = 0.0f64;
    for _ in 0..200 {
        let n = rng.random_range(1..=4);
        let m = rng.random_range(1..=n);
        let inst = Instance::random(&mut rng, n, m, 0.0, 5.0);
        let noisy: Vec<f64> = (0..n).map(|_| rng.random_range(-8.0..8.0)).collect();
        let want = brute_force_nonneg(&inst.rows, &inst.b, &noisy).unwrap();
        let got = Projector::new(&inst.system(true), SolverOptions::default())
            .unwrap()
            .project(&noisy)
            .unwrap();
        worst = worst.max(max_abs_diff(&got.solution, &want));
        let affine = project_affine(&noisy, &inst.system(false)).unwrap().solution;
        *kkt_worst = kkt_worst.max(kkt_residual(&inst, &noisy, &affine));
    }
    (
        worst <= 1e-6 && *kkt_worst <= 1e-8,
        format!("200 instances, max |P+ - oracle| {worst:.2e}; worst (P) KKT residual over all instances {:.2e}", *kkt_worst),
    )
}

fn ac10(dir: &Path) -> Outcome {
    let cfg = dir.join("det.cfg");
    std::fs::write(
        &cfg,
        "kind = bias_Pplus_shift\nnoise = laplace\nnoise.scale = 1\nsynthetic.branching = 2, 3\nsynthetic.leaf_range = 0, 12\nsynthetic.pin_min_leaf = true\nshift_factors = 0, 3\ntrials = 5000\nmaster_seed = 110\n",
    )
    .unwrap();
    let mut reports = Vec::new();
    for workers in [1, 4, 8] {
        let out = dir.join(format!("w{workers}"));
        let status = Command::new(env!("CARGO_BIN_EXE_postproc"))
            .args(["experiment", cfg.to_str().unwrap(), "--workers", &workers.to_string()])
            .arg("--out")
            .arg(&out)
            .output()
            .unwrap()
            .status;
        let json = std::fs::read(out.join("report.json")).unwrap();
        let residuals = std::fs::read(out.join("residuals.csv")).unwrap();
        reports.push((status.code(), json, residuals));
    }
    let same = reports.windows(2).all(|w| w[0] == w[1]);
    (
        same && reports[0].0 == Some(0),
        format!("report.json {} bytes identical across workers 1/4/8: {same}", reports[0].1.len()),
    )
}

fn main() -> ExitCode {
    let dir = tempfile::tempdir().unwrap();
    let mut kkt_worst = 0.0;
    let mut all = true;
    let mut run = |k: usize, name: &str, f: &mut dyn FnMut() -> Outcome| {
        let start = Instant::now();
        let (pass, detail) = f();
        all &= pass;
        println!(
            "AC{k:<2} {} {name}: {detail} [{:.1}s]",
            if pass { "PASS" } else { "FAIL" },
            start.elapsed().as_secs_f64()
        );
    };
    run(1, "affine projection unbiased", &mut || ac1(&mut kkt_worst));
    run(2, "reflection commutes, errors antisymmetric", &mut || ac2(&mut kkt_worst));
    run(3, "non-negative and affine agree inside the r_m ball", &mut ac3);
    run(4, "l1-ball probabilities", &mut ac4);
    run(5, "marginal error variance", &mut ac5);
    run(6, "convergence to the Laplace marginal", &mut ac6);
    run(7, "bias bound dominates measured bias", &mut || ac7(dir.path()));
    run(8, "bias decays as r_m grows", &mut ac8);
    run(9, "solver correctness", &mut || ac9(&mut kkt_worst));
    run(10, "reports independent of worker count", &mut || ac10(dir.path()));
    if all {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
