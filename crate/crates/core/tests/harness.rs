use postproc_core::harness::{
    execute, generate_synthetic_hierarchy, run_experiment, CsvSink, DataSource, ExperimentConfig,
    ExperimentKind, NullSink, ResidualSink, Runner, SyntheticHierarchySpec,
};
use postproc_core::noise::{NoiseSpec, RngStream};

fn synthetic(branching: Vec<usize>, lo: u64, hi: u64, seed: u64, pin: bool) -> DataSource {
    DataSource::Synthetic(SyntheticHierarchySpec {
        branching,
        leaf_range: (lo, hi),
        stream: RngStream::new(seed, 0),
        pin_min_leaf: pin,
    })
}

#[test]
fn synthetic_hierarchy_shape_and_determinism() {
    let spec = SyntheticHierarchySpec {
        branching: vec![2, 3],
        leaf_range: (348, 1_000_000),
        stream: RngStream::new(4, 2),
        pin_min_leaf: false,
    };
    let h = generate_synthetic_hierarchy(&spec).unwrap();
    assert_eq!(h.len(), 9);
    assert!(h.min_count() >= 348.0);
    assert_eq!(h, generate_synthetic_hierarchy(&spec).unwrap());
    let flat = h.flatten();
    for node in &flat {
        if !node.children.is_empty() {
            let sum: f64 = node.children.iter().map(|&c| flat[c].count).sum();
            assert_eq!(sum, node.count);
        }
    }
    let other = SyntheticHierarchySpec {
        stream: RngStream::new(4, 3),
        ..spec.clone()
    };
    assert_ne!(h, generate_synthetic_hierarchy(&other).unwrap());
    let bad = SyntheticHierarchySpec {
        leaf_range: (5, 4),
        ..spec
    };
    assert!(generate_synthetic_hierarchy(&bad).is_err());
}

#[test]
fn affine_projection_passes_zero_bias_gates() {
    let mut cfg = ExperimentConfig::new(ExperimentKind::BiasP, NoiseSpec::laplace(2.0).unwrap());
    cfg.data_source = synthetic(vec![2, 3], 0, 50, 9, true);
    cfg.master_seed = 31;
    let report = run_experiment(&cfg, &Runner::new(2).unwrap(), &mut NullSink).unwrap();
    assert!(report.passed(), "{:?}", report.failing_gates());
    let bias = report.bias.unwrap();
    assert_eq!(bias.projected.trials, 10_000);
    assert_eq!(report.solver.projections, 10_000);
    assert!(report.solver.max_residual_inf < 1e-8);
}

#[test]
fn zero_count_gives_positive_bias_under_clamping() {
    let mut cfg = ExperimentConfig::new(
        ExperimentKind::BiasPplusShift,
        NoiseSpec::laplace(2.0).unwrap(),
    );
    cfg.data_source = synthetic(vec![3], 0, 40, 2, true);
    cfg.shift_factors = vec![0.0];
    cfg.trials = 4_000;
    cfg.leaves_only = true;
    let report = run_experiment(&cfg, &Runner::new(1).unwrap(), &mut NullSink).unwrap();
    let row = &report.shift_sweep[0];
    assert_eq!(row.r_m, 0.0);
    // leaf 0 is pinned to zero
    let mean = row.estimate.mean[0];
    assert!(mean > 4.0 * row.estimate.std_error[0], "{mean}");
    assert!(report.solver.min_value.unwrap() >= -1e-6);
}

#[test]
fn reports_do_not_depend_on_worker_count() {
    let mut cfg = ExperimentConfig::new(
        ExperimentKind::BiasPplusShift,
        NoiseSpec::laplace(1.0).unwrap(),
    );
    cfg.data_source = synthetic(vec![2, 2], 0, 10, 5, true);
    cfg.shift_factors = vec![0.0, 4.0];
    cfg.trials = 5_000;
    let run = |workers| {
        let mut buf = Vec::new();
        let mut sink = CsvSink::new(&mut buf).unwrap();
        let r = run_experiment(&cfg, &Runner::new(workers).unwrap(), &mut sink).unwrap();
        sink.flush().unwrap();
        drop(sink);
        (r.to_json(), buf)
    };
    let (a, ra) = run(1);
    let (b, rb) = run(3);
    assert_eq!(a, b);
    assert_eq!(ra, rb);
    let text = String::from_utf8(ra).unwrap();
    assert!(text.starts_with("series,trial,coordinate,value\nshift=0,0,0,"));
}

#[test]
fn execute_writes_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let text = "\
kind = variance_PS
noise = laplace
noise.scale = 10
dimensions = 15, 254
trials = 2000
";
    let cfg = ExperimentConfig::parse(text, None).unwrap();
    let report = execute(&cfg, 2, dir.path()).unwrap();
    let json = std::fs::read_to_string(dir.path().join("report.json")).unwrap();
    assert_eq!(json, report.to_json());
    assert!(!json.contains("wall_time"));
    let summary = std::fs::read_to_string(dir.path().join("summary.csv")).unwrap();
    assert!(summary.starts_with("section,key,value\n"));
    assert!(dir.path().join("residuals.csv").exists());
    let ratio = report.variance_ratio.unwrap();
    assert!((ratio.analytical - 186.666_666_666_666_67 / 199.212_598_425_196_86).abs() < 1e-12);
}

#[test]
fn config_rejects_bad_input() {
    let ok = "kind = bias_P\nnoise = laplace\nnoise.scale = 2\n";
    assert!(ExperimentConfig::parse(ok, None).is_ok());
    for bad in [
        "kind = bias_P\nnoise = laplace\nnoise.scale = 2\ntrials = 1\n",
        "kind = bias_P\nnoise = laplace\nnoise.scale = 2\nbogus = 3\n",
        "kind = bias_P\nnoise = laplace\nnoise.scale = 2\nnoise.scale = 3\n",
        "kind = bias_Pplus_shift\nnoise = laplace\nnoise.scale = 2\n",
        "kind = variance_PS\nnoise = laplace\nnoise.scale = 2\ndimensions = 4\n",
        "kind = bias_P\nnoise = laplace\nnoise.scale = -2\n",
        "noise = laplace\nnoise.scale = 2\n",
    ] {
        assert!(ExperimentConfig::parse(bad, None).is_err(), "{bad}");
    }
    let geo = "kind = bias_P\nnoise = geometric\nnoise.sensitivity = 1\nnoise.epsilon = 0.5\n";
    let cfg = ExperimentConfig::parse(geo, None).unwrap();
    assert!((cfg.noise.scale() - (-0.5f64).exp()).abs() < 1e-15);
}
