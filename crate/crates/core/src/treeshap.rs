//! Interventional TreeSHAP.
//!
//! One pass over the tree per `(x, z)` pair. The traversal carries the sets
//! `S_X` (features of edges only `x` flows through) and `S_Z` (only `z`), and
//! at each leaf adds the closed-form Shapley value of that leaf's path stump.
//! Nodes where `x` and `z` agree are followed without forking; nodes whose
//! feature is already in `S_X` or `S_Z` follow the same side as before, since
//! the opposite side would make the two sets intersect and the path null.
//!
//! The same traversal drives the Shapley-Taylor and partition variants; only
//! the leaf rule and the feature-to-player map change.

use crate::coalition::{Coalition, COALITION_CAPACITY};
use crate::error::{Error, Result};
use crate::game::WeightTable;
use crate::tree::{check_input, Forest, MaximalPath, Node, Tree};
use crate::AttributionVector;

/// How `x` and `z` relate to a single edge.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EdgeType {
    /// Only `x` flows through.
    X,
    /// Only `z` flows through.
    Z,
    /// Both flow through.
    F,
    /// Both are blocked.
    B,
}

impl EdgeType {
    pub fn from_flows(x_flows: bool, z_flows: bool) -> Self {
        match (x_flows, z_flows) {
            (true, false) => EdgeType::X,
            (false, true) => EdgeType::Z,
            (true, true) => EdgeType::F,
            (false, false) => EdgeType::B,
        }
    }
}

pub fn classify_edge(tree: &Tree, parent: usize, child: usize, x: &[f64], z: &[f64]) -> Result<EdgeType> {
    check_input(x, tree.feature_count())?;
    check_input(z, tree.feature_count())?;
    let x_flows = tree.flows_through(parent, child, x);
    let z_flows = tree.flows_through(parent, child, z);
    match (x_flows, z_flows) {
        (Some(a), Some(b)) => Ok(EdgeType::from_flows(a, b)),
        _ => Err(Error::InvalidEdge { parent, child }),
    }
}

/// Edge types and feature sets of one maximal path.
#[derive(Debug, Clone, PartialEq)]
pub struct PathSets {
    pub edge_types: Vec<EdgeType>,
    pub s_x: Coalition,
    pub s_z: Coalition,
}

impl PathSets {
    pub fn has_blocked_edge(&self) -> bool {
        self.edge_types.contains(&EdgeType::B)
    }

    pub fn s_xz(&self) -> Coalition {
        self.s_x.union(self.s_z)
    }

    /// True when the path stump's game is identically zero: a blocked edge,
    /// or a feature needed by `x` on one edge and by `z` on another.
    pub fn is_null(&self) -> bool {
        self.has_blocked_edge() || !self.s_x.is_disjoint(self.s_z)
    }
}

/// Classifies every edge of `path` and collects `S_X` and `S_Z`.
pub fn classify_path(tree: &Tree, path: &MaximalPath, x: &[f64], z: &[f64]) -> Result<PathSets> {
    if tree.feature_count() > COALITION_CAPACITY {
        return Err(Error::TooManyPlayers {
            players: tree.feature_count(),
            limit: COALITION_CAPACITY,
        });
    }
    let mut sets = PathSets {
        edge_types: Vec::with_capacity(path.edges.len()),
        s_x: Coalition::EMPTY,
        s_z: Coalition::EMPTY,
    };
    for &(parent, child) in &path.edges {
        let ty = classify_edge(tree, parent, child, x, z)?;
        let Node::Split { feature, .. } = *tree.node(parent) else {
            return Err(Error::InvalidEdge { parent, child });
        };
        match ty {
            EdgeType::X => sets.s_x.insert(feature),
            EdgeType::Z => sets.s_z.insert(feature),
            EdgeType::F | EdgeType::B => {}
        }
        sets.edge_types.push(ty);
    }
    Ok(sets)
}

/// `(S_X, S_Z)` carried down the traversal, over players.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct PathState {
    pub s_x: Coalition,
    pub s_z: Coalition,
}

impl PathState {
    pub fn s_xz(&self) -> Coalition {
        self.s_x.union(self.s_z)
    }

    /// `|S_XZ|`; the sets are disjoint along every explored path.
    pub fn s_xz_len(&self) -> usize {
        self.s_x.len() + self.s_z.len()
    }
}

/// Work done by one traversal.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct VisitStats {
    /// Nodes entered; each node is entered at most once.
    pub nodes_visited: usize,
    /// Total leaf-loop iterations, i.e. `Σ |S_XZ|` over reached leaves.
    pub leaf_work: usize,
}

impl std::ops::AddAssign for VisitStats {
    fn add_assign(&mut self, rhs: VisitStats) {
        self.nodes_visited += rhs.nodes_visited;
        self.leaf_work += rhs.leaf_work;
    }
}

/// What happens when the traversal reaches a leaf.
pub(crate) trait LeafRule {
    fn leaf(&mut self, state: PathState, value: f64);
}

/// Shared traversal. `player_of` maps a split feature to the player whose
/// membership is tracked (the identity, or a group index).
///
/// Uses an explicit stack; on a fork the `x` branch is explored first.
pub(crate) fn traverse<K, R>(tree: &Tree, x: &[f64], z: &[f64], player_of: K, rule: &mut R) -> VisitStats
where
    K: Fn(usize) -> usize,
    R: LeafRule,
{
    let mut stats = VisitStats::default();
    let mut stack: Vec<(usize, PathState)> = vec![(0, PathState::default())];
    while let Some((n, state)) = stack.pop() {
        stats.nodes_visited += 1;
        match *tree.node(n) {
            Node::Leaf { value } => {
                let work = state.s_xz_len();
                stats.leaf_work += work;
                if work > 0 {
                    rule.leaf(state, value);
                }
            }
            Node::Split { feature, .. } => {
                let x_child = tree.next(n, x);
                let z_child = tree.next(n, z);
                if x_child == z_child {
                    stack.push((x_child, state));
                    continue;
                }
                let player = player_of(feature);
                if state.s_x.contains(player) {
                    stack.push((x_child, state));
                } else if state.s_z.contains(player) {
                    stack.push((z_child, state));
                } else {
                    stack.push((
                        z_child,
                        PathState {
                            s_x: state.s_x,
                            s_z: state.s_z.with(player),
                        },
                    ));
                    stack.push((
                        x_child,
                        PathState {
                            s_x: state.s_x.with(player),
                            s_z: state.s_z,
                        },
                    ));
                }
            }
        }
    }
    stats
}

/// Contribution of one leaf to a player in `S_XZ`:
/// `W(|S_X| - 1, |S_XZ|)·v` for players in `S_X`, `-W(|S_X|, |S_XZ|)·v` for
/// players in `S_Z`.
pub fn leaf_contribution(s_x_card: usize, s_xz_card: usize, in_s_x: bool, v: f64) -> Result<f64> {
    if s_xz_card == 0 || s_x_card > s_xz_card || s_xz_card > COALITION_CAPACITY {
        return Err(Error::Precondition(format!(
            "need 0 <= |S_X| <= |S_XZ| with 1 <= |S_XZ| <= {COALITION_CAPACITY}, got {s_x_card} and {s_xz_card}"
        )));
    }
    if in_s_x && s_x_card == 0 {
        return Err(Error::Precondition("player in S_X but |S_X| = 0".into()));
    }
    if !in_s_x && s_x_card == s_xz_card {
        return Err(Error::Precondition("player in S_Z but |S_Z| = 0".into()));
    }
    Ok(contribution(WeightTable::global(), s_x_card, s_xz_card, in_s_x, v))
}

#[inline]
fn contribution(w: &WeightTable, s_x_card: usize, s_xz_card: usize, in_s_x: bool, v: f64) -> f64 {
    if in_s_x {
        w.get(s_x_card - 1, s_xz_card) * v
    } else {
        -w.get(s_x_card, s_xz_card) * v
    }
}

pub(crate) struct ShapleyLeaf<'a> {
    pub phi: &'a mut [f64],
    pub weights: &'static WeightTable,
}

impl LeafRule for ShapleyLeaf<'_> {
    fn leaf(&mut self, state: PathState, value: f64) {
        let n = state.s_xz_len();
        let k = state.s_x.len();
        if k > 0 {
            let gain = contribution(self.weights, k, n, true, value);
            for i in state.s_x {
                self.phi[i] += gain;
            }
        }
        if k < n {
            let loss = contribution(self.weights, k, n, false, value);
            for i in state.s_z {
                self.phi[i] += loss;
            }
        }
    }
}

/// Per-leaf rule `(|S_X|, |S_XZ|, player in S_X, v) -> contribution`.
pub type ContributionFn = fn(usize, usize, bool, f64) -> f64;

/// The exact Shapley rule, without precondition checks.
pub fn exact_contribution(s_x_card: usize, s_xz_card: usize, in_s_x: bool, v: f64) -> f64 {
    contribution(WeightTable::global(), s_x_card, s_xz_card, in_s_x, v)
}

struct CustomLeaf<'a> {
    phi: &'a mut [f64],
    rule: ContributionFn,
}

impl LeafRule for CustomLeaf<'_> {
    fn leaf(&mut self, state: PathState, value: f64) {
        let n = state.s_xz_len();
        let k = state.s_x.len();
        for i in state.s_x {
            self.phi[i] += (self.rule)(k, n, true, value);
        }
        for i in state.s_z {
            self.phi[i] += (self.rule)(k, n, false, value);
        }
    }
}

struct NoLeafWork;

impl LeafRule for NoLeafWork {
    fn leaf(&mut self, _: PathState, _: f64) {}
}

pub(crate) fn check_pair(d: usize, x: &[f64], z: &[f64]) -> Result<()> {
    check_input(x, d)?;
    check_input(z, d)
}

pub(crate) fn check_capacity(players: usize) -> Result<()> {
    if players > COALITION_CAPACITY {
        return Err(Error::TooManyPlayers {
            players,
            limit: COALITION_CAPACITY,
        });
    }
    Ok(())
}

/// Exact interventional Shapley values of `tree` for input `x` against the
/// baseline `z`. They sum to `tree(x) - tree(z)`.
pub fn explain_tree(tree: &Tree, x: &[f64], z: &[f64]) -> Result<AttributionVector> {
    explain_tree_instrumented(tree, x, z).map(|(phi, _)| phi)
}

/// [`explain_tree`] together with the traversal's work counters.
pub fn explain_tree_instrumented(tree: &Tree, x: &[f64], z: &[f64]) -> Result<(AttributionVector, VisitStats)> {
    let d = tree.feature_count();
    check_capacity(d)?;
    check_pair(d, x, z)?;
    let mut phi = AttributionVector::zeros(d);
    let stats = explain_into(tree, x, z, phi.values_mut());
    Ok((phi, stats))
}

fn explain_into(tree: &Tree, x: &[f64], z: &[f64], phi: &mut [f64]) -> VisitStats {
    let mut rule = ShapleyLeaf {
        phi,
        weights: WeightTable::global(),
    };
    traverse(tree, x, z, |f| f, &mut rule)
}

/// [`explain_tree`] with a caller-supplied leaf rule; used to instrument or
/// deliberately corrupt the engine in verification runs.
pub fn explain_tree_with(tree: &Tree, x: &[f64], z: &[f64], rule: ContributionFn) -> Result<AttributionVector> {
    let d = tree.feature_count();
    check_capacity(d)?;
    check_pair(d, x, z)?;
    let mut phi = AttributionVector::zeros(d);
    traverse(
        tree,
        x,
        z,
        |f| f,
        &mut CustomLeaf {
            phi: phi.values_mut(),
            rule,
        },
    );
    Ok(phi)
}

/// Shapley values of the forest's aggregated prediction.
pub fn explain_forest(forest: &Forest, x: &[f64], z: &[f64]) -> Result<AttributionVector> {
    explain_forest_instrumented(forest, x, z).map(|(phi, _)| phi)
}

pub fn explain_forest_instrumented(forest: &Forest, x: &[f64], z: &[f64]) -> Result<(AttributionVector, VisitStats)> {
    let d = forest.feature_count();
    check_capacity(d)?;
    check_pair(d, x, z)?;
    let mut phi = AttributionVector::zeros(d);
    let mut stats = VisitStats::default();
    for tree in forest.trees() {
        stats += explain_into(tree, x, z, phi.values_mut());
    }
    phi.scale(forest.scale());
    Ok((phi, stats))
}

/// Counts the nodes and leaf-loop iterations an explanation of `(x, z)` costs.
pub fn visit_counter(tree: &Tree, x: &[f64], z: &[f64]) -> Result<VisitStats> {
    let d = tree.feature_count();
    check_capacity(d)?;
    check_pair(d, x, z)?;
    Ok(traverse(tree, x, z, |f| f, &mut NoLeafWork))
}
