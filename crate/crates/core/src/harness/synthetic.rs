use rand::Rng;
use serde::Serialize;

use crate::constraints::{Hierarchy, HierarchyNode};
use crate::error::{Error, Result};
use crate::noise::RngStream;

/// Shape and leaf-count distribution of a generated region tree.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SyntheticHierarchySpec {
    /// Children per node at each level below the root; levels = len + 1.
    pub branching: Vec<usize>,
    /// Inclusive range of the integer leaf counts.
    pub leaf_range: (u64, u64),
    pub stream: RngStream,
    /// Set the first leaf to the lower end of the range, so the smallest
    /// count is known exactly.
    pub pin_min_leaf: bool,
}

impl SyntheticHierarchySpec {
    pub fn validate(&self) -> Result<()> {
        if self.branching.iter().any(|&b| b == 0) {
            return Err(Error::Domain("branching factors must be >= 1".into()));
        }
        if self.leaf_range.0 > self.leaf_range.1 {
            return Err(Error::Domain("leaf range is empty".into()));
        }
        Ok(())
    }
}

/// Builds a tree with ids `r`, `r.0`, `r.0.1`, ...; leaf counts are drawn in
/// depth-first order from the spec's stream and internal counts are sums.
pub fn generate_synthetic_hierarchy(spec: &SyntheticHierarchySpec) -> Result<Hierarchy> {
    spec.validate()?;
    let mut rng = spec.stream.rng();
    let mut first = spec.pin_min_leaf;
    fn build<R: Rng>(
        id: String,
        depth: usize,
        spec: &SyntheticHierarchySpec,
        rng: &mut R,
        first: &mut bool,
    ) -> HierarchyNode {
        if depth == spec.branching.len() {
            let (lo, hi) = spec.leaf_range;
            let count = if std::mem::take(first) {
                lo
            } else {
                rng.random_range(lo..=hi)
            };
            return HierarchyNode::leaf(id, count as f64);
        }
        let children = (0..spec.branching[depth])
            .map(|k| build(format!("{id}.{k}"), depth + 1, spec, rng, first))
            .collect();
        HierarchyNode::parent(id, children)
    }
    Hierarchy::new(build("r".into(), 0, spec, &mut rng, &mut first))
}
