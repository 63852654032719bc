//! Exact game-theoretic attributions for decision tree ensembles.
//!
//! For an input `x` and a baseline `z`, the baseline interventional game
//! assigns to a coalition `S` of features the model output at the point that
//! takes `x`'s values on `S` and `z`'s elsewhere. This crate computes, in time
//! linear in tree size:
//!
//! * Shapley values of that game ([`explain_tree`], [`explain_forest`]),
//! * pairwise Shapley-Taylor interaction indices
//!   ([`explain_interactions_tree`], [`explain_interactions_forest`]),
//! * Shapley values of groups of coordinates, e.g. one-hot blocks
//!   ([`explain_partition_tree`], [`explain_partition_forest`]),
//!
//! together with exponential-time reference solvers in [`game`] and [`naive`]
//! and a randomized verification campaign in [`harness`].

pub mod attribution;
pub mod coalition;
pub mod error;
pub mod game;
pub mod harness;
pub mod naive;
pub mod partition;
pub mod taylor;
pub mod tree;
pub mod treeshap;

pub use attribution::{AttributionVector, InteractionMatrix};
pub use coalition::Coalition;
pub use error::{Error, Result};
pub use partition::{
    build_index, embed, explain_partition_forest, explain_partition_tree, EmbeddingSpec, FeatureEmbedding,
    PartitionIndex,
};
pub use taylor::{explain_interactions_forest, explain_interactions_tree};
pub use tree::{parse_model, Aggregation, Forest, MaximalPath, Node, Tree};
pub use treeshap::{explain_forest, explain_tree, explain_tree_with, visit_counter, EdgeType, VisitStats};
