//! Randomized verification campaign.
//!
//! Every case draws its tree, inputs, spec or game from its own ChaCha
//! substream of the configured seed, so cases are independent of each other
//! and of thread scheduling. Each fast engine is compared against the
//! enumeration oracles and checked against the laws its output must obey;
//! results are folded into one entry per property.

use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::game::{
    brute_force_shapley, brute_force_shapley_taylor, grouped_game, interventional_game, replace, FnGame, Game,
    TabularGame, TAYLOR_ORACLE_LIMIT,
};
use crate::naive::{naive_path_shapley, naive_path_shapley_grouped, naive_path_shapley_with, NaiveOptions};
use crate::partition::{build_index, embed, explain_partition_tree, EmbeddingSpec, FeatureEmbedding, PartitionIndex};
use crate::taylor::{explain_interactions_forest, explain_interactions_tree};
use crate::tree::{parse_model, Aggregation, Forest, MaximalPath, Node, Tree};
use crate::treeshap::{classify_path, explain_forest, explain_tree, visit_counter};
use crate::{AttributionVector, Coalition, InteractionMatrix, Result};

/// Absolute tolerance for comparisons against an enumeration oracle.
pub const ORACLE_TOLERANCE: f64 = 1e-9;
/// Absolute tolerance for algebraic identities such as linearity.
pub const ALGEBRAIC_TOLERANCE: f64 = 1e-12;
/// Default largest feature count compared against an enumeration oracle.
pub const DEFAULT_ORACLE_GUARD: usize = 12;

const GAME_MAX_PLAYERS: usize = 8;
const DUMMY_REDUCTION_MAX_PLAYERS: usize = 13;
const FLOW_BLOCKING_MAX_SET: usize = 12;
const FOREST_SIZE: usize = 5;
const SPEC_MAX_FEATURES: usize = 6;
const SPEC_MAX_WIDTH: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FuzzConfig {
    pub seed: u64,
    pub tree_count: usize,
    pub max_depth: usize,
    pub feature_count: usize,
    pub pairs_per_tree: usize,
    pub value_range: (f64, f64),
    pub threshold_range: (f64, f64),
    /// Spec for the grouped cases; a fresh random mixed spec per case if unset.
    pub group_spec: Option<EmbeddingSpec>,
    /// Oracle comparisons are skipped above this many players.
    pub oracle_guard: usize,
}

impl Default for FuzzConfig {
    fn default() -> Self {
        FuzzConfig {
            seed: 0,
            tree_count: 200,
            max_depth: 6,
            feature_count: 8,
            pairs_per_tree: 10,
            value_range: (-1.0, 1.0),
            threshold_range: (-1.0, 1.0),
            group_spec: None,
            oracle_guard: DEFAULT_ORACLE_GUARD,
        }
    }
}

/// Engines under test. Replacing one with a corrupted variant is how the
/// campaign itself is checked.
#[derive(Clone, Copy)]
pub struct Engines {
    pub shapley: fn(&Tree, &[f64], &[f64]) -> Result<AttributionVector>,
    pub taylor: fn(&Tree, &[f64], &[f64]) -> Result<InteractionMatrix>,
    pub partition: fn(&Tree, &[f64], &[f64], &PartitionIndex) -> Result<AttributionVector>,
}

impl Default for Engines {
    fn default() -> Self {
        Engines {
            shapley: explain_tree,
            taylor: explain_interactions_tree,
            partition: explain_partition_tree,
        }
    }
}

// ---- generation ----

#[derive(Clone, Copy)]
enum Domain {
    Tree = 1,
    Pair = 2,
    Grouped = 3,
    GroupedPair = 4,
    Game = 5,
    ModelPair = 6,
    ModelForestPair = 7,
}

fn substream(seed: u64, domain: Domain, a: usize, b: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((domain as u64) << 56) | ((a as u64 & 0xFFFF_FFFF) << 24) | (b as u64 & 0xFF_FFFF));
    rng
}

fn uniform<R: Rng>(rng: &mut R, (lo, hi): (f64, f64)) -> f64 {
    if lo < hi {
        rng.gen_range(lo..hi)
    } else {
        lo
    }
}

/// Random tree over `feature_count` features. A node at depth `k` becomes a
/// leaf with probability `k / max_depth`; nodes at `max_depth` are always
/// leaves. Nodes are numbered in preorder.
pub fn random_tree<R: Rng>(
    rng: &mut R,
    feature_count: usize,
    max_depth: usize,
    value_range: (f64, f64),
    mut threshold: impl FnMut(&mut R, usize) -> f64,
) -> Tree {
    let mut nodes: Vec<Option<Node>> = vec![None];
    let mut stack = vec![(0usize, 0usize)];
    while let Some((slot, depth)) = stack.pop() {
        let leaf = depth >= max_depth || feature_count == 0 || rng.gen_bool(depth as f64 / max_depth as f64);
        if leaf {
            nodes[slot] = Some(Node::Leaf {
                value: uniform(rng, value_range),
            });
            continue;
        }
        let feature = rng.gen_range(0..feature_count);
        let threshold = threshold(rng, feature);
        let left = nodes.len();
        nodes.extend([None, None]);
        nodes[slot] = Some(Node::Split {
            feature,
            threshold,
            left,
            right: left + 1,
        });
        stack.push((left + 1, depth + 1));
        stack.push((left, depth + 1));
    }
    let nodes = nodes.into_iter().map(|n| n.expect("every slot is filled")).collect();
    Tree::from_nodes(nodes, feature_count).expect("generated trees are valid")
}

/// The `tree_index`-th tree of the campaign.
pub fn generate_random_tree(cfg: &FuzzConfig, tree_index: usize) -> Tree {
    let mut rng = substream(cfg.seed, Domain::Tree, tree_index, 0);
    let range = cfg.threshold_range;
    random_tree(&mut rng, cfg.feature_count, cfg.max_depth, cfg.value_range, |r, _| {
        uniform(r, range)
    })
}

/// The `pair_index`-th `(x, z)` pair for the `tree_index`-th tree. Some
/// coordinates are shared between `x` and `z`, and some land exactly on a
/// threshold of the tree.
pub fn generate_pair(cfg: &FuzzConfig, tree: &Tree, tree_index: usize, pair_index: usize) -> (Vec<f64>, Vec<f64>) {
    let mut rng = substream(cfg.seed, Domain::Pair, tree_index, pair_index);
    let thresholds = tree.thresholds_by_feature();
    let draw = |rng: &mut ChaCha8Rng, f: usize| {
        if !thresholds[f].is_empty() && rng.gen_bool(0.1) {
            *thresholds[f].choose(rng).unwrap()
        } else {
            uniform(rng, cfg.threshold_range)
        }
    };
    let mut x = Vec::with_capacity(tree.feature_count());
    let mut z = Vec::with_capacity(tree.feature_count());
    for f in 0..tree.feature_count() {
        let xf = draw(&mut rng, f);
        let zf = if rng.gen_bool(0.25) { xf } else { draw(&mut rng, f) };
        x.push(xf);
        z.push(zf);
    }
    (x, z)
}

/// Random mixed spec with at most `max_features` raw features and at most
/// `max_width` embedded coordinates.
pub fn random_spec<R: Rng>(rng: &mut R, max_features: usize, max_width: usize) -> EmbeddingSpec {
    let d = rng.gen_range(1..=max_features.min(max_width).max(1));
    let mut width = 0;
    let mut features = Vec::with_capacity(d);
    for left in (0..d).rev() {
        // keep one coordinate for each remaining feature
        let budget = max_width - width - left;
        let e = if budget >= 2 && rng.gen_bool(0.5) {
            FeatureEmbedding::OneHot {
                categories: rng.gen_range(2..=budget.min(4)),
            }
        } else {
            FeatureEmbedding::Identity
        };
        width += e.width();
        features.push(e);
    }
    EmbeddingSpec::new(features).expect("cardinalities are at least 2")
}

/// Random raw row for `spec`: numeric cells uniform over `range`, categorical
/// cells uniform over their categories.
pub fn random_raw_row<R: Rng>(rng: &mut R, spec: &EmbeddingSpec, range: (f64, f64)) -> Vec<f64> {
    spec.features()
        .iter()
        .map(|e| match *e {
            FeatureEmbedding::Identity => uniform(rng, range),
            FeatureEmbedding::OneHot { categories } => rng.gen_range(0..categories) as f64,
        })
        .collect()
}

/// A grouped case: a spec, its index, a tree over the embedded coordinates
/// and embedded input pairs.
#[derive(Debug, Clone)]
pub struct GroupedCase {
    pub spec: EmbeddingSpec,
    pub index: PartitionIndex,
    pub tree: Tree,
    pub pairs: Vec<(Vec<f64>, Vec<f64>)>,
}

pub fn generate_grouped_case(cfg: &FuzzConfig, case_index: usize) -> GroupedCase {
    let mut rng = substream(cfg.seed, Domain::Grouped, case_index, 0);
    let spec = match &cfg.group_spec {
        Some(spec) => spec.clone(),
        None => random_spec(&mut rng, SPEC_MAX_FEATURES, SPEC_MAX_WIDTH),
    };
    let index = build_index(&spec).expect("spec was validated");
    let one_hot: Vec<bool> = index
        .groups()
        .iter()
        .map(|&g| matches!(spec.features()[g], FeatureEmbedding::OneHot { .. }))
        .collect();
    let range = cfg.threshold_range;
    let tree = random_tree(
        &mut rng,
        index.embedded_count(),
        cfg.max_depth,
        cfg.value_range,
        |r, c| {
            if one_hot[c] {
                r.gen_range(0.01..0.99)
            } else {
                uniform(r, range)
            }
        },
    );
    let pairs = (0..cfg.pairs_per_tree)
        .map(|j| {
            let mut rng = substream(cfg.seed, Domain::GroupedPair, case_index, j);
            let x = random_raw_row(&mut rng, &spec, range);
            let mut z = random_raw_row(&mut rng, &spec, range);
            for (zi, xi) in z.iter_mut().zip(&x) {
                if rng.gen_bool(0.3) {
                    *zi = *xi;
                }
            }
            (embed(&x, &spec).unwrap(), embed(&z, &spec).unwrap())
        })
        .collect();
    GroupedCase {
        spec,
        index,
        tree,
        pairs,
    }
}

/// Draws an input near the model's own thresholds: each coordinate is a
/// threshold used on that feature, sometimes exactly and otherwise jittered
/// by a fraction of the feature's threshold spread.
pub fn sample_near_thresholds<R: Rng>(rng: &mut R, thresholds: &[Vec<f64>]) -> Vec<f64> {
    thresholds
        .iter()
        .map(|ts| {
            let Some(&t) = ts.choose(rng) else {
                return 0.0;
            };
            if rng.gen_bool(0.2) {
                return t;
            }
            let lo = ts.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = ts.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let scale = ((hi - lo) / 4.0).max(1e-3 * t.abs().max(1.0));
            t + rng.gen_range(-1.0..1.0) * scale
        })
        .collect()
}

fn model_pair(rng: &mut ChaCha8Rng, thresholds: &[Vec<f64>]) -> (Vec<f64>, Vec<f64>) {
    let x = sample_near_thresholds(rng, thresholds);
    let mut z = sample_near_thresholds(rng, thresholds);
    for (zi, xi) in z.iter_mut().zip(&x) {
        if rng.gen_bool(0.25) {
            *zi = *xi;
        }
    }
    (x, z)
}

fn forest_thresholds(forest: &Forest) -> Vec<Vec<f64>> {
    let mut out = vec![Vec::new(); forest.feature_count()];
    for tree in forest.trees() {
        for (acc, ts) in out.iter_mut().zip(tree.thresholds_by_feature()) {
            acc.extend(ts);
        }
    }
    out
}

// ---- properties ----

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CheckKind {
    /// Compares against an exponential-time enumeration; subject to the guard.
    Oracle,
    /// A law checked directly on the engine output.
    Invariant,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Tree,
    Forest,
    Grouped,
    Game,
    ModelTree,
    ModelForest,
}

impl Family {
    const ALL: [Family; 6] = [
        Family::Tree,
        Family::Forest,
        Family::Grouped,
        Family::Game,
        Family::ModelTree,
        Family::ModelForest,
    ];

    fn section(self) -> &'static str {
        match self {
            Family::ModelTree | Family::ModelForest => "model",
            _ => "fuzz",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Prop {
    GameEfficiency,
    GameSymmetry,
    GameDummy,
    GameLinearity,
    DummyReduction,
    GameTaylorEfficiency,
    NaiveOracle,
    ShapOracle,
    ShapEfficiency,
    ShapDummy,
    NullPathLaws,
    NullPathIsolated,
    FlowBlocking,
    VisitBound,
    ForestOracle,
    ForestEfficiency,
    ForestLinearity,
    TaylorOracle,
    TaylorEfficiency,
    TaylorSymmetry,
    TaylorDummy,
    TaylorNullPaths,
    TaylorForestOracle,
    GroupedOracle,
    GroupedEfficiency,
    GroupedNullLaw,
    GroupDummy,
    DummyLifting,
    IdentityFallback,
    SinglePath,
    PathDecomposition,
    RoundTrip,
}

struct PropDef {
    module: &'static str,
    name: &'static str,
    kind: CheckKind,
    tolerance: f64,
}

impl Prop {
    const ALL: [Prop; 32] = [
        Prop::GameEfficiency,
        Prop::GameSymmetry,
        Prop::GameDummy,
        Prop::GameLinearity,
        Prop::DummyReduction,
        Prop::GameTaylorEfficiency,
        Prop::NaiveOracle,
        Prop::ShapOracle,
        Prop::ShapEfficiency,
        Prop::ShapDummy,
        Prop::NullPathLaws,
        Prop::NullPathIsolated,
        Prop::FlowBlocking,
        Prop::VisitBound,
        Prop::ForestOracle,
        Prop::ForestEfficiency,
        Prop::ForestLinearity,
        Prop::TaylorOracle,
        Prop::TaylorEfficiency,
        Prop::TaylorSymmetry,
        Prop::TaylorDummy,
        Prop::TaylorNullPaths,
        Prop::TaylorForestOracle,
        Prop::GroupedOracle,
        Prop::GroupedEfficiency,
        Prop::GroupedNullLaw,
        Prop::GroupDummy,
        Prop::DummyLifting,
        Prop::IdentityFallback,
        Prop::SinglePath,
        Prop::PathDecomposition,
        Prop::RoundTrip,
    ];

    fn def(self) -> PropDef {
        use CheckKind::{Invariant as I, Oracle as O};
        let (module, name, kind, tolerance) = match self {
            Prop::GameEfficiency => ("shapley_core", "efficiency", I, ORACLE_TOLERANCE),
            Prop::GameSymmetry => ("shapley_core", "symmetry", I, ALGEBRAIC_TOLERANCE),
            Prop::GameDummy => ("shapley_core", "dummy", I, 0.0),
            Prop::GameLinearity => ("shapley_core", "linearity", I, ORACLE_TOLERANCE),
            Prop::DummyReduction => ("shapley_core", "dummy_reduction", I, ALGEBRAIC_TOLERANCE),
            Prop::GameTaylorEfficiency => ("shapley_core", "taylor_efficiency", I, ORACLE_TOLERANCE),
            Prop::NaiveOracle => ("shapley_core", "path_sum_oracle", O, ORACLE_TOLERANCE),
            Prop::ShapOracle => ("treeshap", "oracle_equivalence", O, ORACLE_TOLERANCE),
            Prop::ShapEfficiency => ("treeshap", "efficiency", I, ORACLE_TOLERANCE),
            Prop::ShapDummy => ("treeshap", "dummy", I, 0.0),
            Prop::NullPathLaws => ("treeshap", "null_path_laws", O, ORACLE_TOLERANCE),
            Prop::NullPathIsolated => ("treeshap", "null_path_isolated", I, 0.0),
            Prop::FlowBlocking => ("treeshap", "flow_blocking", I, 0.0),
            Prop::VisitBound => ("treeshap", "visit_bound", I, 0.0),
            Prop::ForestOracle => ("treeshap", "forest_oracle", O, ORACLE_TOLERANCE),
            Prop::ForestEfficiency => ("treeshap", "forest_efficiency", I, ORACLE_TOLERANCE),
            Prop::ForestLinearity => ("treeshap", "forest_linearity", I, ALGEBRAIC_TOLERANCE),
            Prop::TaylorOracle => ("taylor_treeshap", "oracle_equivalence", O, ORACLE_TOLERANCE),
            Prop::TaylorEfficiency => ("taylor_treeshap", "efficiency", I, ORACLE_TOLERANCE),
            Prop::TaylorSymmetry => ("taylor_treeshap", "symmetry", I, 0.0),
            Prop::TaylorDummy => ("taylor_treeshap", "dummy", I, 0.0),
            Prop::TaylorNullPaths => ("taylor_treeshap", "null_path_isolated", I, 0.0),
            Prop::TaylorForestOracle => ("taylor_treeshap", "forest_oracle", O, ORACLE_TOLERANCE),
            Prop::GroupedOracle => ("partition_treeshap", "oracle_equivalence", O, ORACLE_TOLERANCE),
            Prop::GroupedEfficiency => ("partition_treeshap", "efficiency", I, ORACLE_TOLERANCE),
            Prop::GroupedNullLaw => ("partition_treeshap", "null_path_laws", O, ORACLE_TOLERANCE),
            Prop::GroupDummy => ("partition_treeshap", "group_dummy", I, 0.0),
            Prop::DummyLifting => ("partition_treeshap", "dummy_lifting", I, 0.0),
            Prop::IdentityFallback => ("partition_treeshap", "identity_fallback", I, 0.0),
            Prop::SinglePath => ("tree_model", "single_path", I, 0.0),
            Prop::PathDecomposition => ("tree_model", "path_decomposition", I, 0.0),
            Prop::RoundTrip => ("tree_model", "round_trip", I, 0.0),
        };
        PropDef {
            module,
            name,
            kind,
            tolerance,
        }
    }
}

enum Outcome {
    Checked(f64),
    Skipped,
}

struct Obs {
    prop: Prop,
    pair: Option<usize>,
    outcome: Outcome,
}

/// Observations of one case.
struct Sink {
    pair: Option<usize>,
    obs: Vec<Obs>,
}

impl Sink {
    fn new() -> Self {
        Sink {
            pair: None,
            obs: Vec::new(),
        }
    }

    fn check(&mut self, prop: Prop, error: f64) {
        self.obs.push(Obs {
            prop,
            pair: self.pair,
            outcome: Outcome::Checked(error),
        });
    }

    fn checked(&mut self, prop: Prop, error: Result<f64>) {
        self.check(prop, error.unwrap_or(f64::INFINITY));
    }

    fn skip(&mut self, prop: Prop) {
        self.obs.push(Obs {
            prop,
            pair: self.pair,
            outcome: Outcome::Skipped,
        });
    }
}

fn max_abs(values: impl IntoIterator<Item = f64>) -> f64 {
    values.into_iter().fold(0.0, |m, v| worse(m, v.abs()))
}

/// Larger error, with NaN winning so it is never hidden.
fn worse(a: f64, b: f64) -> f64 {
    if a.is_nan() || b.is_nan() {
        f64::NAN
    } else {
        a.max(b)
    }
}

fn vec_diff(a: &AttributionVector, b: &AttributionVector) -> f64 {
    if a.len() != b.len() {
        return f64::INFINITY;
    }
    max_abs(a.iter().zip(b.iter()).map(|(p, q)| p - q))
}

fn matrix_diff(a: &InteractionMatrix, b: &InteractionMatrix) -> f64 {
    if a.dim() != b.dim() {
        return f64::INFINITY;
    }
    max_abs(a.values().iter().zip(b.values()).map(|(p, q)| p - q))
}

fn tree_game<'a>(tree: &'a Tree, x: &'a [f64], z: &'a [f64]) -> Result<impl Game + 'a> {
    interventional_game(move |p: &[f64]| tree.predict_unchecked(p), x, z)
}

fn forest_game<'a>(forest: &'a Forest, x: &'a [f64], z: &'a [f64]) -> Result<impl Game + 'a> {
    interventional_game(move |p: &[f64]| forest.predict_unchecked(p), x, z)
}

fn path_flows(tree: &Tree, path: &MaximalPath, p: &[f64]) -> bool {
    path.edges
        .iter()
        .all(|&(a, b)| tree.flows_through(a, b, p) == Some(true))
}

struct Ctx<'a> {
    cfg: &'a FuzzConfig,
    engines: &'a Engines,
}

impl Ctx<'_> {
    fn oracle_ok(&self, players: usize) -> bool {
        players <= self.cfg.oracle_guard
    }

    /// Every per-tree check for one tree and its pairs.
    fn tree_case(&self, sink: &mut Sink, tree: &Tree, pairs: &[(Vec<f64>, Vec<f64>)], only: Option<usize>) {
        let d = tree.feature_count();
        let used = tree.used_features();
        let paths = tree.maximal_paths();
        let identity = PartitionIndex::identity(d);

        sink.pair = None;
        if only.is_none() {
            sink.checked(Prop::RoundTrip, round_trip_error(tree, pairs));
        }

        for (j, (x, z)) in pairs.iter().enumerate() {
            if only.is_some_and(|o| o != j) {
                continue;
            }
            sink.pair = Some(j);
            let (x, z) = (x.as_slice(), z.as_slice());
            let gap = tree.predict_unchecked(x) - tree.predict_unchecked(z);

            // tree model
            let through = paths.iter().filter(|p| path_flows(tree, p, x)).count();
            sink.check(Prop::SinglePath, (through as f64 - 1.0).abs());
            let stumps: Result<f64> = paths.iter().map(|p| tree.evaluate_path_stump(p, x)).sum();
            sink.checked(
                Prop::PathDecomposition,
                stumps.map(|s| (s - tree.predict_unchecked(x)).abs()),
            );

            // Shapley
            let phi = (self.engines.shapley)(tree, x, z);
            match &phi {
                Ok(phi) => {
                    sink.check(Prop::ShapEfficiency, (phi.sum() - gap).abs());
                    sink.check(Prop::ShapDummy, max_abs((0..d).filter(|&i| !used[i]).map(|i| phi[i])));
                    let fallback = (self.engines.partition)(tree, x, z, &identity);
                    sink.check(
                        Prop::IdentityFallback,
                        fallback.map_or(f64::INFINITY, |f| vec_diff(&f, phi)),
                    );
                }
                Err(_) => sink.check(Prop::ShapEfficiency, f64::INFINITY),
            }
            if self.oracle_ok(d) {
                let oracle = tree_game(tree, x, z).and_then(|g| brute_force_shapley(&g));
                let diff = |other: &Result<AttributionVector>| match (other, &oracle) {
                    (Ok(a), Ok(b)) => vec_diff(a, b),
                    _ => f64::INFINITY,
                };
                sink.check(Prop::ShapOracle, diff(&phi));
                sink.check(Prop::NaiveOracle, diff(&naive_path_shapley(tree, x, z)));
                let skip = naive_path_shapley(tree, x, z);
                let all = naive_path_shapley_with(tree, x, z, NaiveOptions { skip_null_paths: false });
                let laws = match (&skip, &all, &phi) {
                    (Ok(s), Ok(a), Ok(p)) => worse(vec_diff(s, a), vec_diff(a, p)),
                    _ => f64::INFINITY,
                };
                sink.check(Prop::NullPathLaws, laws);
            } else {
                sink.skip(Prop::ShapOracle);
                sink.skip(Prop::NaiveOracle);
                sink.skip(Prop::NullPathLaws);
            }

            match visit_counter(tree, x, z) {
                Ok(stats) => {
                    let ok = stats.nodes_visited <= tree.node_count() && stats.leaf_work <= tree.leaf_count() * d;
                    sink.check(Prop::VisitBound, if ok { 0.0 } else { 1.0 });
                }
                Err(_) => sink.check(Prop::VisitBound, f64::INFINITY),
            }

            for path in &paths {
                let Ok(sets) = classify_path(tree, path, x, z) else {
                    sink.check(Prop::FlowBlocking, f64::INFINITY);
                    continue;
                };
                if sets.is_null() {
                    let isolated = tree.isolate_leaf(path.leaf);
                    sink.checked(
                        Prop::NullPathIsolated,
                        (self.engines.shapley)(&isolated, x, z).map(|p| max_abs(p.iter().copied())),
                    );
                    sink.checked(
                        Prop::TaylorNullPaths,
                        (self.engines.taylor)(&isolated, x, z).map(|m| max_abs(m.values().iter().copied())),
                    );
                }
                let s_xz = sets.s_xz();
                if s_xz.len() <= FLOW_BLOCKING_MAX_SET {
                    let mut violations = 0usize;
                    for s in s_xz.subsets() {
                        let p = replace(x, z, s).expect("pair was validated");
                        let expect = !sets.is_null() && s == sets.s_x;
                        let stump = tree.evaluate_path_stump(path, &p).unwrap_or(f64::NAN);
                        let want = if expect { path.leaf_value } else { 0.0 };
                        if path_flows(tree, path, &p) != expect || stump != want {
                            violations += 1;
                        }
                    }
                    sink.check(Prop::FlowBlocking, violations as f64);
                }
            }

            // Shapley-Taylor
            match (self.engines.taylor)(tree, x, z) {
                Ok(m) => {
                    sink.check(Prop::TaylorEfficiency, (m.total() - gap).abs());
                    sink.check(
                        Prop::TaylorSymmetry,
                        max_abs(
                            (0..d)
                                .flat_map(|i| (0..d).map(move |j| (i, j)))
                                .map(|(i, j)| m[(i, j)] - m[(j, i)]),
                        ),
                    );
                    sink.check(
                        Prop::TaylorDummy,
                        max_abs(
                            (0..d)
                                .filter(|&i| !used[i])
                                .flat_map(|i| (0..d).flat_map(move |j| [(i, j), (j, i)]))
                                .map(|ij| m[ij]),
                        ),
                    );
                    if self.oracle_ok(d) && d <= TAYLOR_ORACLE_LIMIT {
                        let oracle = tree_game(tree, x, z).and_then(|g| brute_force_shapley_taylor(&g));
                        sink.checked(Prop::TaylorOracle, oracle.map(|o| matrix_diff(&m, &o)));
                    } else {
                        sink.skip(Prop::TaylorOracle);
                    }
                }
                Err(_) => sink.check(Prop::TaylorEfficiency, f64::INFINITY),
            }
        }
    }

    fn forest_case(&self, sink: &mut Sink, forest: &Forest, pairs: &[(Vec<f64>, Vec<f64>)], only: Option<usize>) {
        let d = forest.feature_count();
        for (j, (x, z)) in pairs.iter().enumerate() {
            if only.is_some_and(|o| o != j) {
                continue;
            }
            sink.pair = Some(j);
            let (x, z) = (x.as_slice(), z.as_slice());
            let gap = forest.predict_unchecked(x) - forest.predict_unchecked(z);
            let phi = match explain_forest(forest, x, z) {
                Ok(phi) => phi,
                Err(_) => {
                    sink.check(Prop::ForestEfficiency, f64::INFINITY);
                    continue;
                }
            };
            sink.check(Prop::ForestEfficiency, (phi.sum() - gap).abs());
            let mut summed = AttributionVector::zeros(d);
            for tree in forest.trees() {
                match (self.engines.shapley)(tree, x, z) {
                    Ok(t) => summed.add_scaled(&t, forest.scale()),
                    Err(_) => summed.values_mut().fill(f64::INFINITY),
                }
            }
            sink.check(Prop::ForestLinearity, vec_diff(&phi, &summed));
            if self.oracle_ok(d) {
                let oracle = forest_game(forest, x, z).and_then(|g| brute_force_shapley(&g));
                sink.checked(Prop::ForestOracle, oracle.map(|o| vec_diff(&phi, &o)));
                if d <= TAYLOR_ORACLE_LIMIT {
                    let m = explain_interactions_forest(forest, x, z);
                    let o = forest_game(forest, x, z).and_then(|g| brute_force_shapley_taylor(&g));
                    let err = match (m, o) {
                        (Ok(m), Ok(o)) => matrix_diff(&m, &o),
                        _ => f64::INFINITY,
                    };
                    sink.check(Prop::TaylorForestOracle, err);
                } else {
                    sink.skip(Prop::TaylorForestOracle);
                }
            } else {
                sink.skip(Prop::ForestOracle);
                sink.skip(Prop::TaylorForestOracle);
            }
        }
    }

    fn grouped_case(&self, sink: &mut Sink, case: &GroupedCase, only: Option<usize>) {
        let GroupedCase { index, tree, pairs, .. } = case;
        let used = tree.used_features();
        let dead_groups: Vec<usize> = (0..index.group_count())
            .filter(|&g| index.members(g).iter().all(|&c| !used[c]))
            .collect();
        for (j, (x, z)) in pairs.iter().enumerate() {
            if only.is_some_and(|o| o != j) {
                continue;
            }
            sink.pair = Some(j);
            let (x, z) = (x.as_slice(), z.as_slice());
            let gap = tree.predict_unchecked(x) - tree.predict_unchecked(z);
            let phi = match (self.engines.partition)(tree, x, z, index) {
                Ok(phi) => phi,
                Err(_) => {
                    sink.check(Prop::GroupedEfficiency, f64::INFINITY);
                    continue;
                }
            };
            sink.check(Prop::GroupedEfficiency, (phi.sum() - gap).abs());
            sink.check(Prop::GroupDummy, max_abs(dead_groups.iter().map(|&g| phi[g])));
            if self.oracle_ok(tree.feature_count()) {
                let oracle = tree_game(tree, x, z)
                    .and_then(|g| grouped_game(g, index))
                    .and_then(|g| brute_force_shapley(&g));
                sink.checked(Prop::GroupedOracle, oracle.map(|o| vec_diff(&phi, &o)));
                let skip = naive_path_shapley_grouped(tree, x, z, index, NaiveOptions::default());
                let all = naive_path_shapley_grouped(tree, x, z, index, NaiveOptions { skip_null_paths: false });
                let err = match (skip, all) {
                    (Ok(s), Ok(a)) => worse(vec_diff(&s, &a), vec_diff(&a, &phi)),
                    _ => f64::INFINITY,
                };
                sink.check(Prop::GroupedNullLaw, err);
            } else {
                sink.skip(Prop::GroupedOracle);
                sink.skip(Prop::GroupedNullLaw);
            }
        }
    }

    fn game_case(&self, sink: &mut Sink, case_index: usize) {
        let mut rng = substream(self.cfg.seed, Domain::Game, case_index, 0);
        // synthetic games are small and fixed-size, so the guard does not apply
        let d = rng.gen_range(1..=GAME_MAX_PLAYERS);
        let range = self.cfg.value_range;
        let table = |rng: &mut ChaCha8Rng| {
            let values = (0..1usize << d).map(|_| uniform(rng, range)).collect();
            TabularGame::new(d, values).expect("table size matches")
        };
        let base = table(&mut rng);
        let mu = table(&mut rng);
        let Ok(phi) = brute_force_shapley(&base) else {
            sink.check(Prop::GameEfficiency, f64::INFINITY);
            return;
        };
        let full = Coalition::full(d);
        let gap = base.value(full) - base.value(Coalition::EMPTY);
        sink.check(Prop::GameEfficiency, (phi.sum() - gap).abs());

        let p = rng.gen_range(0..d);
        let dummy = FnGame::new(d, |s: Coalition| base.value(s.without(p)));
        sink.checked(Prop::GameDummy, brute_force_shapley(&dummy).map(|f| f[p].abs()));

        if d >= 2 {
            let a = rng.gen_range(0..d);
            let b = (a + rng.gen_range(1..d)) % d;
            let swap = |s: Coalition| {
                if s.contains(a) != s.contains(b) {
                    Coalition::from_bits(s.bits() ^ (1 << a) ^ (1 << b))
                } else {
                    s
                }
            };
            let sym = FnGame::new(d, |s: Coalition| base.value(s) + base.value(swap(s)));
            sink.checked(
                Prop::GameSymmetry,
                brute_force_shapley(&sym).map(|f| (f[a] - f[b]).abs()),
            );
        }

        let alpha = rng.gen_range(-2.0..2.0);
        let mix = FnGame::new(d, |s: Coalition| alpha * base.value(s) + mu.value(s));
        let err = brute_force_shapley(&mix).and_then(|combined| {
            let mut expect = brute_force_shapley(&mu)?;
            expect.add_scaled(&phi, alpha);
            Ok(vec_diff(&combined, &expect))
        });
        sink.checked(Prop::GameLinearity, err);

        let k = rng.gen_range(1..=DUMMY_REDUCTION_MAX_PLAYERS - d);
        let mask = full.bits();
        let extended = FnGame::new(d + k, |s: Coalition| base.value(Coalition::from_bits(s.bits() & mask)));
        let err = brute_force_shapley(&extended).map(|ext| {
            let kept = max_abs(ext.values()[..d].iter().zip(phi.iter()).map(|(a, b)| a - b));
            worse(kept, max_abs(ext.values()[d..].iter().copied()))
        });
        sink.checked(Prop::DummyReduction, err);

        sink.checked(
            Prop::GameTaylorEfficiency,
            brute_force_shapley_taylor(&base).map(|m| (m.total() - gap).abs()),
        );

        // A group all of whose coordinates are dummies is a dummy group.
        let groups = rng.gen_range(1..=d);
        let mut group_of: Vec<usize> = (0..d)
            .map(|i| if i < groups { i } else { rng.gen_range(0..groups) })
            .collect();
        group_of.shuffle(&mut rng);
        let index = PartitionIndex::new(group_of, groups).expect("every group is hit");
        let g = rng.gen_range(0..groups);
        let members: Coalition = index.members(g).iter().copied().collect();
        let lifted = FnGame::new(d, |s: Coalition| base.value(s.difference(members)));
        let err = brute_force_shapley(&lifted).and_then(|coords| {
            let grouped = brute_force_shapley(&grouped_game(&lifted, &index)?)?;
            Ok(worse(max_abs(members.iter().map(|c| coords[c])), grouped[g].abs()))
        });
        sink.checked(Prop::DummyLifting, err);
    }
}

fn round_trip_error(tree: &Tree, pairs: &[(Vec<f64>, Vec<f64>)]) -> Result<f64> {
    let parsed = parse_model(Forest::single(tree.clone()).to_json().as_bytes())?;
    let back = &parsed.trees()[0];
    if back != tree {
        return Ok(1.0);
    }
    Ok(max_abs(pairs.iter().flat_map(|(x, z)| {
        [x, z].map(|p| back.predict_unchecked(p) - tree.predict_unchecked(p))
    })))
}

// ---- report ----

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Pass,
    Fail,
    Skipped,
}

/// Where a failure happened; [`replay`] re-runs exactly that case.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailureRecord {
    pub seed: u64,
    pub family: Family,
    pub tree: usize,
    pub pair: Option<usize>,
    pub error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropertyReport {
    pub section: String,
    pub module: String,
    pub property: String,
    pub kind: CheckKind,
    pub status: Status,
    pub cases: usize,
    pub skipped: usize,
    pub max_error: f64,
    pub tolerance: f64,
    /// First failing case in campaign order.
    pub failure: Option<FailureRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub config: FuzzConfig,
    pub entries: Vec<PropertyReport>,
}

impl SuiteReport {
    pub fn passed(&self) -> bool {
        self.entries.iter().all(|e| e.status != Status::Fail)
    }

    pub fn failures(&self) -> impl Iterator<Item = &PropertyReport> {
        self.entries.iter().filter(|e| e.status == Status::Fail)
    }

    pub fn entry(&self, section: &str, module: &str, property: &str) -> Option<&PropertyReport> {
        self.entries
            .iter()
            .find(|e| e.section == section && e.module == module && e.property == property)
    }

    /// One JSON object per line: the configuration, then one per property.
    pub fn to_jsonl(&self) -> String {
        #[derive(Serialize)]
        struct Head<'a> {
            config: &'a FuzzConfig,
        }
        let mut out = serde_json::to_string(&Head { config: &self.config }).unwrap();
        out.push('\n');
        for e in &self.entries {
            out.push_str(&serde_json::to_string(e).unwrap());
            out.push('\n');
        }
        out
    }

    pub fn summary_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<6} {:<19} {:<20} {:<9} {:<8} {:>7} {:>7} {:>10} {:>8}",
            "set", "module", "property", "kind", "status", "cases", "skipped", "max_error", "tol"
        );
        for e in &self.entries {
            let kind = match e.kind {
                CheckKind::Oracle => "oracle",
                CheckKind::Invariant => "invariant",
            };
            let status = match e.status {
                Status::Pass => "pass",
                Status::Fail => "FAIL",
                Status::Skipped => "skipped",
            };
            let _ = writeln!(
                out,
                "{:<6} {:<19} {:<20} {:<9} {:<8} {:>7} {:>7} {:>10.2e} {:>8.0e}",
                e.section, e.module, e.property, kind, status, e.cases, e.skipped, e.max_error, e.tolerance
            );
            if let Some(f) = &e.failure {
                let pair = f.pair.map_or("-".to_string(), |p| p.to_string());
                let _ = writeln!(
                    out,
                    "       first failure: seed={} family={:?} tree={} pair={} error={:e}",
                    f.seed, f.family, f.tree, pair, f.error
                );
            }
        }
        let failed = self.failures().count();
        let _ = writeln!(out, "{} properties, {} failed", self.entries.len(), failed);
        out
    }
}

#[derive(Default)]
struct Tally {
    cases: usize,
    skipped: usize,
    max_error: f64,
    failure: Option<FailureRecord>,
}

fn fold(cfg: &FuzzConfig, results: Vec<(Family, usize, Vec<Obs>)>) -> SuiteReport {
    let key = |family: Family, prop: Prop| {
        let section = if family.section() == "model" { 1 } else { 0 };
        section * Prop::ALL.len() + prop as usize
    };
    let mut tallies: Vec<Tally> = (0..2 * Prop::ALL.len()).map(|_| Tally::default()).collect();
    for (family, tree, obs) in results {
        for o in obs {
            let def = o.prop.def();
            let t = &mut tallies[key(family, o.prop)];
            match o.outcome {
                Outcome::Skipped => t.skipped += 1,
                Outcome::Checked(error) => {
                    t.cases += 1;
                    t.max_error = worse(t.max_error, error);
                    let failed = error.is_nan() || error > def.tolerance;
                    if failed && t.failure.is_none() {
                        t.failure = Some(FailureRecord {
                            seed: cfg.seed,
                            family,
                            tree,
                            pair: o.pair,
                            error,
                        });
                    }
                }
            }
        }
    }
    let mut entries = Vec::new();
    for (section_id, section) in ["fuzz", "model"].into_iter().enumerate() {
        for prop in Prop::ALL {
            let t = std::mem::take(&mut tallies[section_id * Prop::ALL.len() + prop as usize]);
            if t.cases == 0 && t.skipped == 0 {
                continue;
            }
            let def = prop.def();
            let status = if t.failure.is_some() {
                Status::Fail
            } else if t.cases == 0 {
                Status::Skipped
            } else {
                Status::Pass
            };
            entries.push(PropertyReport {
                section: section.to_string(),
                module: def.module.to_string(),
                property: def.name.to_string(),
                kind: def.kind,
                status,
                cases: t.cases,
                skipped: t.skipped,
                max_error: t.max_error,
                tolerance: def.tolerance,
                failure: t.failure,
            });
        }
    }
    SuiteReport {
        config: cfg.clone(),
        entries,
    }
}

fn fuzz_pairs(cfg: &FuzzConfig, tree: &Tree, i: usize) -> Vec<(Vec<f64>, Vec<f64>)> {
    (0..cfg.pairs_per_tree)
        .map(|j| generate_pair(cfg, tree, i, j))
        .collect()
}

fn model_pairs(cfg: &FuzzConfig, thresholds: &[Vec<f64>], domain: Domain, i: usize) -> Vec<(Vec<f64>, Vec<f64>)> {
    (0..cfg.pairs_per_tree)
        .map(|j| model_pair(&mut substream(cfg.seed, domain, i, j), thresholds))
        .collect()
}

fn forest_of(trees: &[Tree], chunk: usize) -> Forest {
    let aggregation = if chunk.is_multiple_of(2) {
        Aggregation::Mean
    } else {
        Aggregation::Sum
    };
    Forest::new(trees.to_vec(), aggregation).expect("trees share a feature count")
}

fn run_family(
    ctx: &Ctx,
    family: Family,
    model: Option<&Forest>,
    trees: &[Tree],
    case: usize,
    only: Option<usize>,
) -> Vec<Obs> {
    let cfg = ctx.cfg;
    let mut sink = Sink::new();
    match family {
        Family::Tree => ctx.tree_case(&mut sink, &trees[case], &fuzz_pairs(cfg, &trees[case], case), only),
        Family::Forest => {
            let start = case * FOREST_SIZE;
            let chunk = &trees[start..(start + FOREST_SIZE).min(trees.len())];
            ctx.forest_case(
                &mut sink,
                &forest_of(chunk, case),
                &fuzz_pairs(cfg, &chunk[0], start),
                only,
            )
        }
        Family::Grouped => ctx.grouped_case(&mut sink, &generate_grouped_case(cfg, case), only),
        Family::Game => {
            if only.is_none() {
                ctx.game_case(&mut sink, case)
            }
        }
        Family::ModelTree => {
            let model = model.expect("model family needs a model");
            let pairs = model_pairs(cfg, &forest_thresholds(model), Domain::ModelPair, case);
            ctx.tree_case(&mut sink, &model.trees()[case], &pairs, only)
        }
        Family::ModelForest => {
            let model = model.expect("model family needs a model");
            let pairs = model_pairs(cfg, &forest_thresholds(model), Domain::ModelForestPair, 0);
            ctx.forest_case(&mut sink, model, &pairs, only)
        }
    }
    sink.obs
}

fn case_count(cfg: &FuzzConfig, family: Family, model: Option<&Forest>) -> usize {
    match family {
        Family::Tree | Family::Grouped | Family::Game => cfg.tree_count,
        Family::Forest => cfg.tree_count.div_ceil(FOREST_SIZE),
        Family::ModelTree => model.map_or(0, |m| m.trees().len()),
        Family::ModelForest => usize::from(model.is_some()),
    }
}

/// Runs the full campaign with the shipped engines.
pub fn run_axiom_suite(cfg: &FuzzConfig) -> SuiteReport {
    run_axiom_suite_with(cfg, None, &Engines::default())
}

/// Runs the campaign; with a model, its trees and the whole forest are
/// checked as well on inputs drawn around the model's thresholds.
///
/// Cases run in parallel on the current rayon pool; the report does not
/// depend on the number of threads.
pub fn run_axiom_suite_with(cfg: &FuzzConfig, model: Option<&Forest>, engines: &Engines) -> SuiteReport {
    let ctx = Ctx { cfg, engines };
    let trees: Vec<Tree> = (0..cfg.tree_count)
        .into_par_iter()
        .map(|i| generate_random_tree(cfg, i))
        .collect();
    let jobs: Vec<(Family, usize)> = Family::ALL
        .into_iter()
        .flat_map(|f| (0..case_count(cfg, f, model)).map(move |i| (f, i)))
        .collect();
    let results = jobs
        .into_par_iter()
        .map(|(family, i)| (family, i, run_family(&ctx, family, model, &trees, i, None)))
        .collect();
    fold(cfg, results)
}

/// Re-runs the single case named by `failure`.
pub fn replay(cfg: &FuzzConfig, model: Option<&Forest>, engines: &Engines, failure: &FailureRecord) -> SuiteReport {
    let cfg = FuzzConfig {
        seed: failure.seed,
        ..cfg.clone()
    };
    let ctx = Ctx { cfg: &cfg, engines };
    let needed = match failure.family {
        Family::Tree => failure.tree + 1,
        Family::Forest => ((failure.tree + 1) * FOREST_SIZE).min(cfg.tree_count),
        _ => 0,
    };
    let trees: Vec<Tree> = (0..needed).map(|i| generate_random_tree(&cfg, i)).collect();
    let obs = run_family(&ctx, failure.family, model, &trees, failure.tree, failure.pair);
    fold(&cfg, vec![(failure.family, failure.tree, obs)])
}
