//! Group attributions over a partition of the model's input coordinates.
//!
//! Typical use: categorical features are one-hot encoded before reaching the
//! trees, and one attribution per original feature is wanted. The traversal
//! tracks which *groups* have been assigned to `x` or `z` instead of which
//! coordinates, so a split on any coordinate of an already-seen group follows
//! that group's side.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::game::WeightTable;
use crate::tree::{Forest, Tree};
use crate::treeshap::{check_capacity, check_pair, traverse, ShapleyLeaf, VisitStats};
use crate::AttributionVector;

/// Surjective map from embedded coordinates `[d′]` to groups `[d]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PartitionIndex {
    group_of: Vec<usize>,
    members: Vec<Vec<usize>>,
}

impl PartitionIndex {
    pub fn new(group_of: Vec<usize>, group_count: usize) -> Result<Self> {
        let mut members = vec![Vec::new(); group_count];
        for (j, &g) in group_of.iter().enumerate() {
            if g >= group_count {
                return Err(Error::InvalidPartition(format!(
                    "coordinate {j} maps to group {g}, but there are {group_count} groups"
                )));
            }
            members[g].push(j);
        }
        if let Some(g) = members.iter().position(Vec::is_empty) {
            return Err(Error::InvalidPartition(format!("group {g} has no coordinates")));
        }
        Ok(PartitionIndex { group_of, members })
    }

    pub fn identity(d: usize) -> Self {
        PartitionIndex {
            group_of: (0..d).collect(),
            members: (0..d).map(|j| vec![j]).collect(),
        }
    }

    pub fn group_of(&self, coordinate: usize) -> usize {
        self.group_of[coordinate]
    }

    pub fn groups(&self) -> &[usize] {
        &self.group_of
    }

    /// Coordinates in group `g`, increasing.
    pub fn members(&self, g: usize) -> &[usize] {
        &self.members[g]
    }

    pub fn group_count(&self) -> usize {
        self.members.len()
    }

    pub fn embedded_count(&self) -> usize {
        self.group_of.len()
    }

    pub fn is_identity(&self) -> bool {
        self.group_of.iter().enumerate().all(|(j, &g)| j == g)
    }
}

/// How one raw feature maps into model coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum FeatureEmbedding {
    /// Numeric feature passed through unchanged.
    #[serde(rename = "numeric")]
    Identity,
    /// Categorical feature with values `0..categories`, one-hot encoded.
    #[serde(rename = "categorical")]
    OneHot {
        #[serde(rename = "cardinality")]
        categories: usize,
    },
}

impl FeatureEmbedding {
    pub fn width(&self) -> usize {
        match *self {
            FeatureEmbedding::Identity => 1,
            FeatureEmbedding::OneHot { categories } => categories,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EmbeddingSpec {
    features: Vec<FeatureEmbedding>,
}

impl EmbeddingSpec {
    pub fn new(features: Vec<FeatureEmbedding>) -> Result<Self> {
        let spec = EmbeddingSpec { features };
        spec.validate()?;
        Ok(spec)
    }

    pub fn identity(d: usize) -> Self {
        EmbeddingSpec {
            features: vec![FeatureEmbedding::Identity; d],
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (i, f) in self.features.iter().enumerate() {
            if let FeatureEmbedding::OneHot { categories } = *f {
                if categories < 2 {
                    return Err(Error::InvalidEmbedding(format!(
                        "feature {i}: one-hot encoding needs at least 2 categories, got {categories}"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn features(&self) -> &[FeatureEmbedding] {
        &self.features
    }

    /// Number of raw features `d`.
    pub fn raw_width(&self) -> usize {
        self.features.len()
    }

    /// Number of model coordinates `d′`.
    pub fn embedded_width(&self) -> usize {
        self.features.iter().map(FeatureEmbedding::width).sum()
    }

    pub fn is_identity(&self) -> bool {
        self.features.iter().all(|f| *f == FeatureEmbedding::Identity)
    }
}

/// `I(i) = min { j : i < d_0 + … + d_j }` for the embedding's block widths.
pub fn build_index(spec: &EmbeddingSpec) -> Result<PartitionIndex> {
    spec.validate()?;
    let mut ends = Vec::with_capacity(spec.raw_width());
    let mut total = 0;
    for f in spec.features() {
        total += f.width();
        ends.push(total);
    }
    let group_of = (0..total)
        .map(|i| ends.iter().position(|&end| i < end).expect("i < total"))
        .collect();
    PartitionIndex::new(group_of, spec.raw_width())
}

/// Concatenated embedding of a raw row. Categorical entries must be integral
/// and within `0..cardinality`.
pub fn embed(x_raw: &[f64], spec: &EmbeddingSpec) -> Result<Vec<f64>> {
    if x_raw.len() != spec.raw_width() {
        return Err(Error::DimensionMismatch {
            expected: spec.raw_width(),
            actual: x_raw.len(),
        });
    }
    let mut out = Vec::with_capacity(spec.embedded_width());
    for (i, (&value, f)) in x_raw.iter().zip(spec.features()).enumerate() {
        match *f {
            FeatureEmbedding::Identity => out.push(value),
            FeatureEmbedding::OneHot { categories } => {
                if value.fract() != 0.0 || !value.is_finite() {
                    return Err(Error::InvalidEmbedding(format!(
                        "feature {i}: categorical value {value} is not an integer"
                    )));
                }
                if value < 0.0 || value >= categories as f64 {
                    return Err(Error::InvalidEmbedding(format!(
                        "feature {i}: category {value} out of range 0..{categories}"
                    )));
                }
                let hot = value as usize;
                out.extend((0..categories).map(|c| if c == hot { 1.0 } else { 0.0 }));
            }
        }
    }
    Ok(out)
}

fn check_index(tree_width: usize, index: &PartitionIndex) -> Result<()> {
    if tree_width != index.embedded_count() {
        return Err(Error::InvalidPartition(format!(
            "model has {tree_width} coordinates but the index covers {}",
            index.embedded_count()
        )));
    }
    check_capacity(index.group_count())
}

fn partition_into(tree: &Tree, x: &[f64], z: &[f64], index: &PartitionIndex, phi: &mut [f64]) -> VisitStats {
    let mut rule = ShapleyLeaf {
        phi,
        weights: WeightTable::global(),
    };
    traverse(tree, x, z, |f| index.group_of(f), &mut rule)
}

/// Shapley values of the groups of `index`, for a tree over embedded
/// coordinates `x_emb` against baseline `z_emb`.
pub fn explain_partition_tree(
    tree: &Tree,
    x_emb: &[f64],
    z_emb: &[f64],
    index: &PartitionIndex,
) -> Result<AttributionVector> {
    check_index(tree.feature_count(), index)?;
    check_pair(tree.feature_count(), x_emb, z_emb)?;
    let mut phi = AttributionVector::zeros(index.group_count());
    partition_into(tree, x_emb, z_emb, index, phi.values_mut());
    Ok(phi)
}

pub fn explain_partition_forest(
    forest: &Forest,
    x_emb: &[f64],
    z_emb: &[f64],
    index: &PartitionIndex,
) -> Result<AttributionVector> {
    check_index(forest.feature_count(), index)?;
    check_pair(forest.feature_count(), x_emb, z_emb)?;
    let mut phi = AttributionVector::zeros(index.group_count());
    for tree in forest.trees() {
        partition_into(tree, x_emb, z_emb, index, phi.values_mut());
    }
    phi.scale(forest.scale());
    Ok(phi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::game::{brute_force_shapley, grouped_game, interventional_game};
    use crate::tree::fixtures::{example_tree, split};
    use crate::tree::Node;
    use crate::treeshap::explain_tree;
    use FeatureEmbedding::*;

    #[test]
    fn index_from_mixed_spec() {
        let spec = EmbeddingSpec::new(vec![Identity, OneHot { categories: 3 }]).unwrap();
        let index = build_index(&spec).unwrap();
        assert_eq!(index.groups(), &[0, 1, 1, 1]);
        assert_eq!(index.embedded_count(), 4);
        assert_eq!(index.group_count(), 2);

        let index = build_index(&EmbeddingSpec::identity(5)).unwrap();
        assert_eq!(index, PartitionIndex::identity(5));

        let spec = EmbeddingSpec::new(vec![
            Identity,
            OneHot { categories: 2 },
            OneHot { categories: 4 },
            Identity,
        ])
        .unwrap();
        assert_eq!(build_index(&spec).unwrap().groups(), &[0, 1, 1, 2, 2, 2, 2, 3]);
    }

    #[test]
    fn rejects_degenerate_one_hot() {
        assert!(EmbeddingSpec::new(vec![OneHot { categories: 1 }]).is_err());
        assert!(PartitionIndex::new(vec![0, 2], 3).is_err());
        assert!(PartitionIndex::new(vec![0, 3], 3).is_err());
        // non-contiguous layouts are allowed
        assert!(PartitionIndex::new(vec![1, 0, 1], 2).is_ok());
    }

    #[test]
    fn embeds_one_hot_blocks() {
        let spec = EmbeddingSpec::new(vec![
            Identity,
            OneHot { categories: 2 },
            OneHot { categories: 4 },
            Identity,
        ])
        .unwrap();
        let e = embed(&[0.3, 1.0, 2.0, -7.0], &spec).unwrap();
        assert_eq!(e, vec![0.3, 0.0, 1.0, 0.0, 0.0, 1.0, 0.0, -7.0]);
        assert!(embed(&[0.3, 2.0, 2.0, 0.0], &spec).is_err());
        assert!(embed(&[0.3, 0.5, 2.0, 0.0], &spec).is_err());
        assert!(embed(&[0.3, -1.0, 2.0, 0.0], &spec).is_err());
        assert!(embed(&[0.3, 1.0, 2.0], &spec).is_err());
        let raw = [1.5, -2.0, 0.0];
        assert_eq!(embed(&raw, &EmbeddingSpec::identity(3)).unwrap(), raw);
    }

    #[test]
    fn spec_serializes_as_schema_entries() {
        let spec = EmbeddingSpec::new(vec![Identity, OneHot { categories: 3 }]).unwrap();
        let json = serde_json::to_string(&spec).unwrap();
        assert_eq!(json, r#"[{"kind":"numeric"},{"kind":"categorical","cardinality":3}]"#);
        let back: EmbeddingSpec = serde_json::from_str(&json).unwrap();
        assert_eq!(back, spec);
    }

    #[test]
    fn identity_index_reproduces_treeshap() {
        let tree = example_tree([1.0, 2.0, 3.0, 4.0]);
        let (x, z) = ([0.0, 0.0, 1.0], [-2.0, -1.0, 2.0]);
        let a = explain_partition_tree(&tree, &x, &z, &PartitionIndex::identity(3)).unwrap();
        assert_eq!(a, explain_tree(&tree, &x, &z).unwrap());
        let zero = explain_partition_tree(&tree, &x, &x, &PartitionIndex::identity(3)).unwrap();
        assert!(zero.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn and_of_two_bits_in_one_group() {
        // coordinates: 0 numeric, 1..=2 one group, 3 numeric
        let index = PartitionIndex::new(vec![0, 1, 1, 2], 3).unwrap();
        let tree = Tree::from_nodes(
            vec![
                split(1, 0.5, 1, 2),
                Node::Leaf { value: 0.0 },
                split(2, 0.5, 3, 4),
                Node::Leaf { value: 0.0 },
                Node::Leaf { value: 1.0 },
            ],
            4,
        )
        .unwrap();
        let x = [0.2, 1.0, 1.0, 0.7];
        let z = [0.9, 0.0, 0.0, 0.1];
        let phi = explain_partition_tree(&tree, &x, &z, &index).unwrap();
        assert_eq!(phi.values(), &[0.0, 1.0, 0.0]);

        let game = interventional_game(|p: &[f64]| tree.evaluate(p).unwrap(), &x, &z).unwrap();
        let oracle = brute_force_shapley(&grouped_game(&game, &index).unwrap()).unwrap();
        assert!(phi.max_abs_diff(&oracle) <= 1e-12);
        // feature-level TreeSHAP splits the same gap between the two bits
        assert_eq!(explain_tree(&tree, &x, &z).unwrap().values(), &[0.0, 0.5, 0.5, 0.0]);
    }

    #[test]
    fn scenario_two_keys_on_group_membership() {
        // Root splits coordinate 1, its x-side splits coordinate 2 of the same
        // group. Coordinate 2 was never seen, but its group was, so only the
        // x-side is followed and no fork happens there.
        let index = PartitionIndex::new(vec![0, 1, 1], 2).unwrap();
        let tree = Tree::from_nodes(
            vec![
                split(1, 0.5, 1, 2),
                Node::Leaf { value: 5.0 },
                split(2, 0.5, 3, 4),
                Node::Leaf { value: 2.0 },
                Node::Leaf { value: 3.0 },
            ],
            3,
        )
        .unwrap();
        // x: coord1 = 1 (right), coord2 = 0 (left);  z: coord1 = 0 (left), coord2 = 1
        let x = [0.0, 1.0, 0.0];
        let z = [0.0, 0.0, 1.0];
        let phi = explain_partition_tree(&tree, &x, &z, &index).unwrap();
        // gap = h(x) - h(z) = 2 - 5, all of it to group 1
        assert_eq!(phi.values(), &[0.0, -3.0]);
        let game = interventional_game(|p: &[f64]| tree.evaluate(p).unwrap(), &x, &z).unwrap();
        let oracle = brute_force_shapley(&grouped_game(&game, &index).unwrap()).unwrap();
        assert_eq!(oracle.values(), &[0.0, -3.0]);
    }

    #[test]
    fn rejects_mismatched_index() {
        let tree = example_tree([1.0, 2.0, 3.0, 4.0]);
        let index = PartitionIndex::identity(4);
        assert!(matches!(
            explain_partition_tree(&tree, &[0.0; 3], &[0.0; 3], &index),
            Err(Error::InvalidPartition(_))
        ));
    }
}
