//! Fixtures shared by the benchmarks under `benches/`.

use postproc_core::harness::{generate_synthetic_hierarchy, SyntheticHierarchySpec};
use postproc_core::noise::sample_vector;
use postproc_core::{Hierarchy, NoiseSpec, RngStream};

/// Synthetic region tree with leaf counts in `[0, 1000]`.
pub fn census_tree(branching: &[usize], seed: u64) -> Hierarchy {
    generate_synthetic_hierarchy(&SyntheticHierarchySpec {
        branching: branching.to_vec(),
        leaf_range: (0, 1000),
        stream: RngStream::new(seed, 0),
        pin_min_leaf: true,
    })
    .expect("valid spec")
}

/// `truth + Lap(scale)^n`.
pub fn noisy(truth: &[f64], scale: f64, seed: u64) -> Vec<f64> {
    let spec = NoiseSpec::laplace(scale).expect("positive scale");
    let eta = sample_vector(&spec, truth.len(), RngStream::new(seed, 1)).expect("n >= 1");
    truth.iter().zip(eta).map(|(x, e)| x + e).collect()
}
