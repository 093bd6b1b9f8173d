use std::collections::{HashMap, HashSet, VecDeque};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{LinearSystem, RegionShape};
use crate::error::{Error, Result};

/// A node of a region tree, in the nested form used by the JSON file format.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HierarchyNode {
    pub id: String,
    pub count: f64,
    #[serde(default)]
    pub children: Vec<HierarchyNode>,
}

impl HierarchyNode {
    pub fn leaf(id: impl Into<String>, count: f64) -> Self {
        Self {
            id: id.into(),
            count,
            children: Vec::new(),
        }
    }

    /// Internal node whose count is the sum of its children.
    pub fn parent(id: impl Into<String>, children: Vec<HierarchyNode>) -> Self {
        let count = children.iter().map(|c| c.count).sum();
        Self {
            id: id.into(),
            count,
            children,
        }
    }

    pub fn is_leaf(&self) -> bool {
        self.children.is_empty()
    }
}

/// One node of a hierarchy in breadth-first order.
#[derive(Debug, Clone, PartialEq)]
pub struct FlatNode {
    pub id: String,
    pub level: usize,
    pub count: f64,
    pub parent: Option<usize>,
    pub children: Vec<usize>,
}

/// A validated region tree: non-negative counts, every internal count equal
/// to the sum of its children.
#[derive(Debug, Clone, PartialEq)]
pub struct Hierarchy {
    root: HierarchyNode,
}

impl Hierarchy {
    pub fn new(root: HierarchyNode) -> Result<Self> {
        let h = Self { root };
        h.validate()?;
        Ok(h)
    }

    /// Consistency tolerance, relative to the root total.
    pub fn tolerance(&self) -> f64 {
        1e-9 * (self.root.count.abs() + 1.0)
    }

    fn validate(&self) -> Result<()> {
        let tol = self.tolerance();
        let mut seen = HashSet::new();
        let mut stack = vec![&self.root];
        while let Some(node) = stack.pop() {
            if node.id.is_empty() {
                return Err(Error::Domain("hierarchy node with empty id".into()));
            }
            if !seen.insert(node.id.as_str()) {
                return Err(Error::Domain(format!("duplicate node id {:?}", node.id)));
            }
            if !(node.count >= 0.0) || !node.count.is_finite() {
                return Err(Error::Domain(format!(
                    "node {:?} has invalid count {}",
                    node.id, node.count
                )));
            }
            if !node.is_leaf() {
                let sum: f64 = node.children.iter().map(|c| c.count).sum();
                if (sum - node.count).abs() > tol {
                    return Err(Error::Domain(format!(
                        "node {:?} has count {} but its children sum to {}",
                        node.id, node.count, sum
                    )));
                }
            }
            stack.extend(node.children.iter());
        }
        Ok(())
    }

    pub fn root(&self) -> &HierarchyNode {
        &self.root
    }

    pub fn into_root(self) -> HierarchyNode {
        self.root
    }

    /// Nodes in breadth-first order, children in their stored order.
    pub fn flatten(&self) -> Vec<FlatNode> {
        let mut out: Vec<FlatNode> = Vec::new();
        let mut queue: VecDeque<(&HierarchyNode, usize, Option<usize>)> = VecDeque::new();
        queue.push_back((&self.root, 0, None));
        while let Some((node, level, parent)) = queue.pop_front() {
            let idx = out.len();
            if let Some(p) = parent {
                out[p].children.push(idx);
            }
            out.push(FlatNode {
                id: node.id.clone(),
                level,
                count: node.count,
                parent,
                children: Vec::new(),
            });
            for c in &node.children {
                queue.push_back((c, level + 1, Some(idx)));
            }
        }
        out
    }

    pub fn len(&self) -> usize {
        let mut n = 0;
        let mut stack = vec![&self.root];
        while let Some(node) = stack.pop() {
            n += 1;
            stack.extend(node.children.iter());
        }
        n
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Adds `shift` to every leaf and recomputes internal counts.
    pub fn shift_leaves(&self, shift: f64) -> Result<Self> {
        fn go(node: &HierarchyNode, shift: f64) -> HierarchyNode {
            if node.is_leaf() {
                HierarchyNode::leaf(node.id.clone(), node.count + shift)
            } else {
                HierarchyNode::parent(
                    node.id.clone(),
                    node.children.iter().map(|c| go(c, shift)).collect(),
                )
            }
        }
        Self::new(go(&self.root, shift))
    }

    /// Smallest count in the tree.
    pub fn min_count(&self) -> f64 {
        self.flatten()
            .iter()
            .map(|n| n.count)
            .fold(f64::INFINITY, f64::min)
    }
}

/// Variable order of a system built from a hierarchy.
#[derive(Debug, Clone, PartialEq)]
pub struct VariableMap {
    /// Node id of each variable.
    pub ids: Vec<String>,
    /// Index of each variable in [`Hierarchy::flatten`] order.
    pub nodes: Vec<usize>,
}

impl VariableMap {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.ids.iter().position(|x| x == id)
    }

    /// The hierarchy's counts in variable order.
    pub fn values(&self, h: &Hierarchy) -> Vec<f64> {
        let flat = h.flatten();
        self.nodes.iter().map(|&i| flat[i].count).collect()
    }

    /// Orders an `id -> value` table by variable; every variable must appear.
    pub fn gather(&self, table: &HashMap<String, f64>) -> Result<Vec<f64>> {
        self.ids
            .iter()
            .map(|id| {
                table
                    .get(id)
                    .copied()
                    .ok_or_else(|| Error::Parse(format!("no value for node {id:?}")))
            })
            .collect()
    }
}

/// Builds the consistency system of a hierarchy.
///
/// With `leaves_only = false` every node is a variable (breadth-first order);
/// row 0 pins the root to its total and each internal node contributes the
/// row `sum(children) - parent = 0`. With `leaves_only = true` the leaves are
/// the variables and the single row pins their sum to the root total.
pub fn hierarchy_to_system(h: &Hierarchy, leaves_only: bool) -> Result<(LinearSystem, VariableMap)> {
    let flat = h.flatten();
    let total = flat[0].count;
    if leaves_only {
        let nodes: Vec<usize> = (0..flat.len()).filter(|&i| flat[i].children.is_empty()).collect();
        let ids = nodes.iter().map(|&i| flat[i].id.clone()).collect();
        let sys = LinearSystem::sum_to(nodes.len(), total, true)?;
        return Ok((sys, VariableMap { ids, nodes }));
    }

    let n = flat.len();
    let internal: Vec<usize> = (0..n).filter(|&i| !flat[i].children.is_empty()).collect();
    let m = 1 + internal.len();
    let mut a = DMatrix::zeros(m, n);
    let mut b = DVector::zeros(m);
    a[(0, 0)] = 1.0;
    b[0] = total;
    for (row, &p) in internal.iter().enumerate() {
        a[(row + 1, p)] = -1.0;
        for &c in &flat[p].children {
            a[(row + 1, c)] = 1.0;
        }
    }
    // a node is forced to the total when its subtree holds every leaf
    let mut leaves_below = vec![0usize; n];
    for i in (0..n).rev() {
        leaves_below[i] = if flat[i].children.is_empty() {
            1
        } else {
            flat[i].children.iter().map(|&c| leaves_below[c]).sum()
        };
    }
    let fixed = leaves_below.iter().map(|&k| k == leaves_below[0]).collect();
    let shape = RegionShape::Hierarchy {
        caps: vec![total; n],
        fixed,
    };
    let sys = LinearSystem::new(a, b, true)?.with_shape(shape);
    let map = VariableMap {
        ids: flat.iter().map(|f| f.id.clone()).collect(),
        nodes: (0..n).collect(),
    };
    Ok((sys, map))
}
