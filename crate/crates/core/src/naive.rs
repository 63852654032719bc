//! Path-by-path reference solver.
//!
//! Decomposes a tree into its maximal-path stumps and computes each stump's
//! Shapley values by enumerating coalitions of the features that label its
//! `X` and `Z` edges, evaluating the stump itself on every spliced point.
//! Only the stump decomposition and the dummy reduction are assumed; no
//! closed-form leaf formula is used.

use crate::coalition::Coalition;
use crate::error::{Error, Result};
use crate::game::{replace_into, WeightTable, SHAPLEY_ORACLE_LIMIT};
use crate::partition::PartitionIndex;
use crate::tree::{MaximalPath, Tree};
use crate::treeshap::{check_capacity, check_pair, classify_path};
use crate::AttributionVector;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NaiveOptions {
    /// Skip paths whose game is known to vanish (a blocked edge, or
    /// intersecting `S_X`/`S_Z`). With `false` those paths are enumerated too.
    pub skip_null_paths: bool,
}

impl Default for NaiveOptions {
    fn default() -> Self {
        NaiveOptions { skip_null_paths: true }
    }
}

/// Sum over maximal paths of the enumerated Shapley values of each path stump.
pub fn naive_path_shapley(tree: &Tree, x: &[f64], z: &[f64]) -> Result<AttributionVector> {
    naive_path_shapley_with(tree, x, z, NaiveOptions::default())
}

pub fn naive_path_shapley_with(tree: &Tree, x: &[f64], z: &[f64], opts: NaiveOptions) -> Result<AttributionVector> {
    let d = tree.feature_count();
    check_capacity(d)?;
    check_pair(d, x, z)?;
    let mut phi = AttributionVector::zeros(d);
    for path in tree.maximal_paths() {
        let contribution = path_shapley(tree, &path, x, z, opts)?;
        phi.add_scaled(&contribution, 1.0);
    }
    Ok(phi)
}

/// Enumerated Shapley values of the stump of a single path.
pub fn path_shapley(
    tree: &Tree,
    path: &MaximalPath,
    x: &[f64],
    z: &[f64],
    opts: NaiveOptions,
) -> Result<AttributionVector> {
    let index = PartitionIndex::identity(tree.feature_count());
    grouped_path_shapley(tree, path, x, z, &index, opts)
}

/// Grouped variant: players are the groups of `index`, and activating a group
/// activates all of its coordinates.
pub fn naive_path_shapley_grouped(
    tree: &Tree,
    x: &[f64],
    z: &[f64],
    index: &PartitionIndex,
    opts: NaiveOptions,
) -> Result<AttributionVector> {
    check_capacity(tree.feature_count())?;
    check_pair(tree.feature_count(), x, z)?;
    let mut phi = AttributionVector::zeros(index.group_count());
    for path in tree.maximal_paths() {
        let contribution = grouped_path_shapley(tree, &path, x, z, index, opts)?;
        phi.add_scaled(&contribution, 1.0);
    }
    Ok(phi)
}

fn grouped_path_shapley(
    tree: &Tree,
    path: &MaximalPath,
    x: &[f64],
    z: &[f64],
    index: &PartitionIndex,
    opts: NaiveOptions,
) -> Result<AttributionVector> {
    if index.embedded_count() != tree.feature_count() {
        return Err(Error::InvalidPartition(format!(
            "model has {} coordinates but the index covers {}",
            tree.feature_count(),
            index.embedded_count()
        )));
    }
    let groups = index.group_count();
    let mut phi = AttributionVector::zeros(groups);
    let sets = classify_path(tree, path, x, z)?;
    let to_groups = |s: Coalition| s.iter().map(|j| index.group_of(j)).collect::<Coalition>();
    let (g_x, g_z) = (to_groups(sets.s_x), to_groups(sets.s_z));
    if opts.skip_null_paths && (sets.has_blocked_edge() || !g_x.is_disjoint(g_z)) {
        return Ok(phi);
    }
    let universe = g_x.union(g_z);
    let n = universe.len();
    if n == 0 {
        return Ok(phi);
    }
    if n > SHAPLEY_ORACLE_LIMIT {
        return Err(Error::TooManyPlayers {
            players: n,
            limit: SHAPLEY_ORACLE_LIMIT,
        });
    }
    let preimage = |s: Coalition| {
        s.iter()
            .flat_map(|g| index.members(g).iter().copied())
            .collect::<Coalition>()
    };
    let mut point = Vec::with_capacity(x.len());
    let mut stump = |s: Coalition| -> Result<f64> {
        replace_into(x, z, preimage(s), &mut point);
        tree.evaluate_path_stump(path, &point)
    };
    let weights = WeightTable::global();
    for i in universe {
        let mut acc = 0.0;
        for s in universe.without(i).subsets() {
            acc += weights.get(s.len(), n) * (stump(s.with(i))? - stump(s)?);
        }
        phi[i] = acc;
    }
    Ok(phi)
}
