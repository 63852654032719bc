//! Decision trees, forests and the JSON model document.
//!
//! A tree is a full binary tree stored as a node array with node 0 as root.
//! Internal node `n` routes an input left when `x[feature] <= threshold` and
//! right otherwise; ties go left.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default bound on tree depth accepted by [`parse_model`].
pub const DEFAULT_MAX_DEPTH: usize = 512;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Node {
    Leaf {
        value: f64,
    },
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

impl Node {
    pub fn is_leaf(&self) -> bool {
        matches!(self, Node::Leaf { .. })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tree {
    nodes: Vec<Node>,
    feature_count: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Aggregation {
    #[default]
    Mean,
    Sum,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Forest {
    trees: Vec<Tree>,
    aggregation: Aggregation,
    feature_count: usize,
}

/// Root-to-leaf edge sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct MaximalPath {
    pub edges: Vec<(usize, usize)>,
    pub leaf: usize,
    pub leaf_value: f64,
}

/// Checks that `x` has length `d` and only finite entries.
pub fn check_input(x: &[f64], d: usize) -> Result<()> {
    if x.len() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            actual: x.len(),
        });
    }
    match x.iter().position(|v| !v.is_finite()) {
        Some(index) => Err(Error::NonFinite { index, value: x[index] }),
        None => Ok(()),
    }
}

impl Tree {
    /// Builds a tree from explicit nodes, checking every structural invariant.
    pub fn from_nodes(nodes: Vec<Node>, feature_count: usize) -> Result<Self> {
        Self::validated(nodes, feature_count, 0, DEFAULT_MAX_DEPTH)
    }

    /// A single-leaf tree.
    pub fn leaf(value: f64, feature_count: usize) -> Self {
        Tree {
            nodes: vec![Node::Leaf { value }],
            feature_count,
        }
    }

    fn validated(nodes: Vec<Node>, feature_count: usize, tree: usize, max_depth: usize) -> Result<Self> {
        let bad = |node: usize, reason: String| Error::InvalidNode { tree, node, reason };
        if nodes.is_empty() {
            return Err(Error::InvalidForest(format!("tree {tree} has no nodes")));
        }
        let mut parent_count = vec![0u32; nodes.len()];
        for (n, node) in nodes.iter().enumerate() {
            match *node {
                Node::Leaf { value } => {
                    if !value.is_finite() {
                        return Err(bad(n, format!("non-finite leaf value {value}")));
                    }
                }
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    if feature >= feature_count {
                        return Err(bad(
                            n,
                            format!("split feature {feature} out of range for {feature_count} features"),
                        ));
                    }
                    if !threshold.is_finite() {
                        return Err(bad(n, format!("non-finite threshold {threshold}")));
                    }
                    for child in [left, right] {
                        if child >= nodes.len() {
                            return Err(bad(n, format!("child index {child} out of range")));
                        }
                        if child == 0 || child == n {
                            return Err(bad(n, format!("cycle through child {child}")));
                        }
                        parent_count[child] += 1;
                    }
                    if left == right {
                        return Err(bad(n, format!("left and right child are both {left}")));
                    }
                }
            }
        }
        if let Some(n) = parent_count.iter().skip(1).position(|&c| c != 1) {
            let n = n + 1;
            let reason = if parent_count[n] == 0 {
                "orphan node (no parent)".to_string()
            } else {
                format!("node has {} parents", parent_count[n])
            };
            return Err(bad(n, reason));
        }
        // Every node has one parent and the root none, so reachability from the
        // root is equivalent to acyclicity.
        let mut reached = 0usize;
        let mut stack = vec![(0usize, 0usize)];
        while let Some((n, depth)) = stack.pop() {
            reached += 1;
            if depth > max_depth {
                return Err(bad(n, format!("depth exceeds the limit of {max_depth}")));
            }
            if let Node::Split { left, right, .. } = nodes[n] {
                stack.push((right, depth + 1));
                stack.push((left, depth + 1));
            }
        }
        if reached != nodes.len() {
            return Err(Error::InvalidForest(format!(
                "tree {tree}: {} nodes unreachable from the root (cycle)",
                nodes.len() - reached
            )));
        }
        Ok(Tree { nodes, feature_count })
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn node(&self, n: usize) -> &Node {
        &self.nodes[n]
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn feature_count(&self) -> usize {
        self.feature_count
    }

    pub fn leaf_count(&self) -> usize {
        self.nodes.iter().filter(|n| n.is_leaf()).count()
    }

    pub fn depth(&self) -> usize {
        let mut max = 0;
        let mut stack = vec![(0usize, 0usize)];
        while let Some((n, depth)) = stack.pop() {
            max = max.max(depth);
            if let Node::Split { left, right, .. } = self.nodes[n] {
                stack.push((left, depth + 1));
                stack.push((right, depth + 1));
            }
        }
        max
    }

    /// Features used by at least one internal node.
    pub fn used_features(&self) -> Vec<bool> {
        let mut used = vec![false; self.feature_count];
        for node in &self.nodes {
            if let Node::Split { feature, .. } = *node {
                used[feature] = true;
            }
        }
        used
    }

    /// The same tree with every leaf zeroed except `leaf`. Its prediction is
    /// the stump of the maximal path ending at `leaf`.
    pub fn isolate_leaf(&self, leaf: usize) -> Tree {
        let nodes = self
            .nodes
            .iter()
            .enumerate()
            .map(|(n, node)| match *node {
                Node::Leaf { value } if n == leaf => Node::Leaf { value },
                Node::Leaf { .. } => Node::Leaf { value: 0.0 },
                split => split,
            })
            .collect();
        Tree {
            nodes,
            feature_count: self.feature_count,
        }
    }

    /// Thresholds used on each feature, in node order.
    pub fn thresholds_by_feature(&self) -> Vec<Vec<f64>> {
        let mut out = vec![Vec::new(); self.feature_count];
        for node in &self.nodes {
            if let Node::Split { feature, threshold, .. } = *node {
                out[feature].push(threshold);
            }
        }
        out
    }

    /// Child of internal node `n` that `x` flows into. `n` must be internal.
    #[inline]
    pub(crate) fn next(&self, n: usize, x: &[f64]) -> usize {
        match self.nodes[n] {
            Node::Split {
                feature,
                threshold,
                left,
                right,
            } => {
                if x[feature] <= threshold {
                    left
                } else {
                    right
                }
            }
            Node::Leaf { .. } => unreachable!("next() called on a leaf"),
        }
    }

    /// Leaf reached by `x`, without input validation.
    pub(crate) fn leaf_index(&self, x: &[f64]) -> usize {
        let mut n = 0;
        while !self.nodes[n].is_leaf() {
            n = self.next(n, x);
        }
        n
    }

    pub(crate) fn predict_unchecked(&self, x: &[f64]) -> f64 {
        match self.nodes[self.leaf_index(x)] {
            Node::Leaf { value } => value,
            Node::Split { .. } => unreachable!(),
        }
    }

    pub fn evaluate(&self, x: &[f64]) -> Result<f64> {
        check_input(x, self.feature_count)?;
        Ok(self.predict_unchecked(x))
    }

    /// Whether `x` flows through edge `(parent, child)`; `None` if not an edge.
    pub fn flows_through(&self, parent: usize, child: usize, x: &[f64]) -> Option<bool> {
        match *self.nodes.get(parent)? {
            Node::Split {
                feature,
                threshold,
                left,
                right,
            } => {
                let goes_left = x[feature] <= threshold;
                if child == left {
                    Some(goes_left)
                } else if child == right {
                    Some(!goes_left)
                } else {
                    None
                }
            }
            Node::Leaf { .. } => None,
        }
    }

    /// One path per leaf, depth-first with left children first.
    pub fn maximal_paths(&self) -> Vec<MaximalPath> {
        let mut paths = Vec::with_capacity(self.leaf_count());
        // Frames carry (node, parent, parent depth); the path prefix is the
        // edges vector truncated to the parent's depth.
        let mut edges: Vec<(usize, usize)> = Vec::new();
        let mut stack: Vec<(usize, Option<usize>, usize)> = vec![(0, None, 0)];
        while let Some((n, parent, depth)) = stack.pop() {
            edges.truncate(depth);
            if let Some(p) = parent {
                edges.push((p, n));
            }
            match self.nodes[n] {
                Node::Leaf { value } => paths.push(MaximalPath {
                    edges: edges.clone(),
                    leaf: n,
                    leaf_value: value,
                }),
                Node::Split { left, right, .. } => {
                    let child_depth = edges.len();
                    stack.push((right, Some(n), child_depth));
                    stack.push((left, Some(n), child_depth));
                }
            }
        }
        paths
    }

    /// The stump `h_P(x)`: the leaf value if `x` follows every edge of `path`,
    /// zero otherwise.
    pub fn evaluate_path_stump(&self, path: &MaximalPath, x: &[f64]) -> Result<f64> {
        check_input(x, self.feature_count)?;
        for &(parent, child) in &path.edges {
            match self.flows_through(parent, child, x) {
                Some(true) => {}
                Some(false) => return Ok(0.0),
                None => return Err(Error::InvalidEdge { parent, child }),
            }
        }
        Ok(path.leaf_value)
    }

    fn to_document(&self) -> TreeDocument {
        let mut doc = TreeDocument::default();
        for node in &self.nodes {
            match *node {
                Node::Leaf { value } => {
                    doc.split_feature.push(-1);
                    doc.threshold.push(0.0);
                    doc.left_child.push(-1);
                    doc.right_child.push(-1);
                    doc.leaf_value.push(value);
                }
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    doc.split_feature.push(feature as i64);
                    doc.threshold.push(threshold);
                    doc.left_child.push(left as i64);
                    doc.right_child.push(right as i64);
                    doc.leaf_value.push(0.0);
                }
            }
        }
        doc
    }

    fn from_document(doc: &TreeDocument, feature_count: usize, tree: usize, max_depth: usize) -> Result<Self> {
        let n = doc.split_feature.len();
        let lengths = [
            doc.threshold.len(),
            doc.left_child.len(),
            doc.right_child.len(),
            doc.leaf_value.len(),
        ];
        if lengths.iter().any(|&l| l != n) {
            return Err(Error::InvalidForest(format!(
                "tree {tree}: node arrays have differing lengths ({n}, {lengths:?})"
            )));
        }
        let bad = |node: usize, reason: String| Error::InvalidNode { tree, node, reason };
        let mut nodes = Vec::with_capacity(n);
        for i in 0..n {
            let (f, l, r) = (doc.split_feature[i], doc.left_child[i], doc.right_child[i]);
            let node = match (l, r) {
                (-1, -1) => Node::Leaf {
                    value: doc.leaf_value[i],
                },
                (l, r) if l >= 0 && r >= 0 => {
                    if f < 0 {
                        return Err(bad(i, format!("internal node has split feature {f}")));
                    }
                    Node::Split {
                        feature: f as usize,
                        threshold: doc.threshold[i],
                        left: l as usize,
                        right: r as usize,
                    }
                }
                _ => return Err(bad(i, format!("children ({l}, {r}) must both be -1 or both be valid"))),
            };
            nodes.push(node);
        }
        Self::validated(nodes, feature_count, tree, max_depth)
    }
}

impl Forest {
    pub fn new(trees: Vec<Tree>, aggregation: Aggregation) -> Result<Self> {
        let first = trees
            .first()
            .ok_or_else(|| Error::InvalidForest("forest has no trees".into()))?;
        let feature_count = first.feature_count;
        if let Some(t) = trees.iter().position(|t| t.feature_count != feature_count) {
            return Err(Error::InvalidForest(format!(
                "tree {t} declares {} features, expected {feature_count}",
                trees[t].feature_count
            )));
        }
        Ok(Forest {
            trees,
            aggregation,
            feature_count,
        })
    }

    pub fn single(tree: Tree) -> Self {
        let feature_count = tree.feature_count;
        Forest {
            trees: vec![tree],
            aggregation: Aggregation::Mean,
            feature_count,
        }
    }

    pub fn trees(&self) -> &[Tree] {
        &self.trees
    }

    pub fn aggregation(&self) -> Aggregation {
        self.aggregation
    }

    pub fn feature_count(&self) -> usize {
        self.feature_count
    }

    pub fn node_count(&self) -> usize {
        self.trees.iter().map(Tree::node_count).sum()
    }

    /// Factor applied to the per-tree sum: `1/|F|` for mean, 1 for sum.
    pub fn scale(&self) -> f64 {
        match self.aggregation {
            Aggregation::Mean => 1.0 / self.trees.len() as f64,
            Aggregation::Sum => 1.0,
        }
    }

    pub fn evaluate(&self, x: &[f64]) -> Result<f64> {
        check_input(x, self.feature_count)?;
        Ok(self.predict_unchecked(x))
    }

    pub(crate) fn predict_unchecked(&self, x: &[f64]) -> f64 {
        let total: f64 = self.trees.iter().map(|t| t.predict_unchecked(x)).sum();
        match self.aggregation {
            Aggregation::Mean => total / self.trees.len() as f64,
            Aggregation::Sum => total,
        }
    }

    /// The same forest with its trees repeated `times` times.
    pub fn repeated(&self, times: usize) -> Forest {
        let trees = (0..times).flat_map(|_| self.trees.iter().cloned()).collect();
        Forest {
            trees,
            aggregation: self.aggregation,
            feature_count: self.feature_count,
        }
    }

    pub fn to_document(&self) -> ModelDocument {
        ModelDocument {
            feature_count: self.feature_count,
            aggregation: self.aggregation,
            trees: self.trees.iter().map(Tree::to_document).collect(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_document()).expect("model document serializes")
    }
}

/// Serialized model: one object per forest, node arrays per tree, `-1` marking
/// leaf slots in `split_feature`, `left_child` and `right_child`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelDocument {
    pub feature_count: usize,
    #[serde(default)]
    pub aggregation: Aggregation,
    pub trees: Vec<TreeDocument>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct TreeDocument {
    pub split_feature: Vec<i64>,
    pub threshold: Vec<f64>,
    pub left_child: Vec<i64>,
    pub right_child: Vec<i64>,
    pub leaf_value: Vec<f64>,
}

impl ModelDocument {
    pub fn into_forest(self, max_depth: usize) -> Result<Forest> {
        let trees = self
            .trees
            .iter()
            .enumerate()
            .map(|(t, doc)| Tree::from_document(doc, self.feature_count, t, max_depth))
            .collect::<Result<Vec<_>>>()?;
        Forest::new(trees, self.aggregation)
    }
}

/// Parses and validates a model document.
pub fn parse_model(bytes: &[u8]) -> Result<Forest> {
    parse_model_with_depth_limit(bytes, DEFAULT_MAX_DEPTH)
}

pub fn parse_model_with_depth_limit(bytes: &[u8], max_depth: usize) -> Result<Forest> {
    let doc: ModelDocument = serde_json::from_slice(bytes).map_err(|e| Error::MalformedModel(e.to_string()))?;
    doc.into_forest(max_depth)
}

#[cfg(test)]
pub(crate) mod fixtures {
    use super::*;

    /// The 7-node example tree: splits (feature 1, 0.5), (2, 1.33), (0, 0.25)
    /// with leaves 3..=6.
    pub fn example_tree(leaves: [f64; 4]) -> Tree {
        Tree::from_nodes(
            vec![
                split(1, 0.5, 1, 2),
                split(2, 1.33, 3, 4),
                split(0, 0.25, 5, 6),
                Node::Leaf { value: leaves[0] },
                Node::Leaf { value: leaves[1] },
                Node::Leaf { value: leaves[2] },
                Node::Leaf { value: leaves[3] },
            ],
            3,
        )
        .unwrap()
    }

    pub fn split(feature: usize, threshold: f64, left: usize, right: usize) -> Node {
        Node::Split {
            feature,
            threshold,
            left,
            right,
        }
    }
}
