//! Coalitional games and exponential-time reference solvers.
//!
//! Everything here enumerates coalitions explicitly. It exists to pin down the
//! definitions the tree algorithms must agree with, and it accepts arbitrary
//! games so the Shapley axioms can be exercised on synthetic inputs as well.

use std::sync::OnceLock;

use crate::coalition::{Coalition, COALITION_CAPACITY};
use crate::error::{Error, Result};
use crate::partition::PartitionIndex;
use crate::{AttributionVector, InteractionMatrix};

/// Player limit for [`brute_force_shapley`].
pub const SHAPLEY_ORACLE_LIMIT: usize = 20;
/// Player limit for [`brute_force_shapley_taylor`].
pub const TAYLOR_ORACLE_LIMIT: usize = 16;

/// A cooperative game `ν : 2^[d] → ℝ`.
pub trait Game {
    fn player_count(&self) -> usize;
    fn value(&self, coalition: Coalition) -> f64;
}

impl<G: Game + ?Sized> Game for &G {
    fn player_count(&self) -> usize {
        (**self).player_count()
    }

    fn value(&self, coalition: Coalition) -> f64 {
        (**self).value(coalition)
    }
}

/// A game backed by a closure.
pub struct FnGame<F> {
    players: usize,
    f: F,
}

impl<F: Fn(Coalition) -> f64> FnGame<F> {
    pub fn new(players: usize, f: F) -> Self {
        FnGame { players, f }
    }
}

impl<F: Fn(Coalition) -> f64> Game for FnGame<F> {
    fn player_count(&self) -> usize {
        self.players
    }

    fn value(&self, coalition: Coalition) -> f64 {
        (self.f)(coalition)
    }
}

/// A game stored as an explicit table indexed by coalition bit pattern.
#[derive(Debug, Clone, PartialEq)]
pub struct TabularGame {
    players: usize,
    values: Vec<f64>,
}

impl TabularGame {
    pub fn new(players: usize, values: Vec<f64>) -> Result<Self> {
        if players > SHAPLEY_ORACLE_LIMIT {
            return Err(Error::TooManyPlayers {
                players,
                limit: SHAPLEY_ORACLE_LIMIT,
            });
        }
        if values.len() != 1 << players {
            return Err(Error::DimensionMismatch {
                expected: 1 << players,
                actual: values.len(),
            });
        }
        Ok(TabularGame { players, values })
    }

    /// Evaluates `game` on every coalition.
    pub fn tabulate<G: Game>(game: &G) -> Result<Self> {
        let players = game.player_count();
        if players > SHAPLEY_ORACLE_LIMIT {
            return Err(Error::TooManyPlayers {
                players,
                limit: SHAPLEY_ORACLE_LIMIT,
            });
        }
        let values = (0..1u64 << players)
            .map(|bits| game.value(Coalition::from_bits(bits)))
            .collect();
        Ok(TabularGame { players, values })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

impl Game for TabularGame {
    fn player_count(&self) -> usize {
        self.players
    }

    fn value(&self, coalition: Coalition) -> f64 {
        self.values[coalition.bits() as usize]
    }
}

/// Component `i` is `x[i]` when `i ∈ s`, otherwise `z[i]`.
pub fn replace(x: &[f64], z: &[f64], s: Coalition) -> Result<Vec<f64>> {
    if x.len() != z.len() {
        return Err(Error::DimensionMismatch {
            expected: x.len(),
            actual: z.len(),
        });
    }
    if let Some(i) = s.iter().find(|&i| i >= x.len()) {
        return Err(Error::Precondition(format!(
            "coalition member {i} out of range for {} players",
            x.len()
        )));
    }
    let mut out = Vec::with_capacity(x.len());
    replace_into(x, z, s, &mut out);
    Ok(out)
}

pub(crate) fn replace_into(x: &[f64], z: &[f64], s: Coalition, out: &mut Vec<f64>) {
    out.clear();
    out.extend(
        x.iter()
            .zip(z)
            .enumerate()
            .map(|(i, (&xi, &zi))| if s.contains(i) { xi } else { zi }),
    );
}

/// The baseline interventional game of a model `h`: `ν(S) = h(replace(x, z, S))`.
pub struct InterventionalGame<'a, H> {
    model: H,
    x: &'a [f64],
    z: &'a [f64],
}

pub fn interventional_game<'a, H>(model: H, x: &'a [f64], z: &'a [f64]) -> Result<InterventionalGame<'a, H>>
where
    H: Fn(&[f64]) -> f64,
{
    if x.len() != z.len() {
        return Err(Error::DimensionMismatch {
            expected: x.len(),
            actual: z.len(),
        });
    }
    if x.len() > COALITION_CAPACITY {
        return Err(Error::TooManyPlayers {
            players: x.len(),
            limit: COALITION_CAPACITY,
        });
    }
    Ok(InterventionalGame { model, x, z })
}

impl<H: Fn(&[f64]) -> f64> Game for InterventionalGame<'_, H> {
    fn player_count(&self) -> usize {
        self.x.len()
    }

    fn value(&self, coalition: Coalition) -> f64 {
        let mut point = Vec::with_capacity(self.x.len());
        replace_into(self.x, self.z, coalition, &mut point);
        (self.model)(&point)
    }
}

/// The game over groups induced by a partition: `ν^I(S) = ν(I⁻¹(S))`.
pub struct GroupedGame<G> {
    base: G,
    members: Vec<Coalition>,
}

pub fn grouped_game<G: Game>(base: G, index: &PartitionIndex) -> Result<GroupedGame<G>> {
    if base.player_count() != index.embedded_count() {
        return Err(Error::InvalidPartition(format!(
            "index covers {} coordinates but the game has {} players",
            index.embedded_count(),
            base.player_count()
        )));
    }
    if index.embedded_count() > COALITION_CAPACITY {
        return Err(Error::TooManyPlayers {
            players: index.embedded_count(),
            limit: COALITION_CAPACITY,
        });
    }
    let members = (0..index.group_count())
        .map(|g| index.members(g).iter().copied().collect())
        .collect();
    Ok(GroupedGame { base, members })
}

impl<G> GroupedGame<G> {
    /// `I⁻¹(S)`.
    pub fn preimage(&self, groups: Coalition) -> Coalition {
        groups
            .iter()
            .fold(Coalition::EMPTY, |acc, g| acc.union(self.members[g]))
    }
}

impl<G: Game> Game for GroupedGame<G> {
    fn player_count(&self) -> usize {
        self.members.len()
    }

    fn value(&self, coalition: Coalition) -> f64 {
        self.base.value(self.preimage(coalition))
    }
}

fn binomial(n: u64, k: u64) -> u128 {
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        // exact at every step: acc is C(n, i) times (n - i), divisible by i + 1
        acc = acc * (n - i) as u128 / (i + 1) as u128;
    }
    acc
}

/// `W(k, d) = k!(d-k-1)!/d!`, the share of player orderings in which a given
/// player is preceded by exactly one particular size-`k` coalition.
pub fn shapley_weight(k: usize, d: usize) -> Result<f64> {
    if d == 0 || k >= d {
        return Err(Error::WeightOutOfRange { k, d });
    }
    if d > COALITION_CAPACITY {
        return Err(Error::TooManyPlayers {
            players: d,
            limit: COALITION_CAPACITY,
        });
    }
    Ok(weight_exact(k, d))
}

fn weight_exact(k: usize, d: usize) -> f64 {
    1.0 / (d as u128 * binomial(d as u64 - 1, k as u64)) as f64
}

/// Precomputed `W(k, d)` for every `d ≤ 64`.
pub struct WeightTable {
    // row d holds W(0..d, d)
    rows: Vec<Vec<f64>>,
}

impl WeightTable {
    fn build() -> Self {
        // Pascal's rule keeps every binomial exact in u128
        let mut rows = vec![Vec::new()];
        let mut pascal: Vec<u128> = vec![1]; // C(d - 1, .)
        for d in 1..=COALITION_CAPACITY {
            rows.push(pascal.iter().map(|&c| 1.0 / (d as u128 * c) as f64).collect());
            pascal = (0..=d).map(|k| if k == 0 || k == d { 1 } else { pascal[k - 1] + pascal[k] }).collect();
        }
        WeightTable { rows }
    }

    /// Shared table, built on first use.
    pub fn global() -> &'static WeightTable {
        static TABLE: OnceLock<WeightTable> = OnceLock::new();
        TABLE.get_or_init(WeightTable::build)
    }

    #[inline]
    pub fn get(&self, k: usize, d: usize) -> f64 {
        self.rows[d][k]
    }
}

/// Exact Shapley values by enumerating, for each player, every coalition of
/// the remaining players.
pub fn brute_force_shapley<G: Game>(game: &G) -> Result<AttributionVector> {
    let d = game.player_count();
    if d > SHAPLEY_ORACLE_LIMIT {
        return Err(Error::TooManyPlayers {
            players: d,
            limit: SHAPLEY_ORACLE_LIMIT,
        });
    }
    let table = TabularGame::tabulate(game)?;
    let everyone = Coalition::full(d);
    let mut phi = vec![0.0; d];
    for (i, phi_i) in phi.iter_mut().enumerate() {
        let others = everyone.without(i);
        for s in others.subsets() {
            let w = weight_exact(s.len(), d);
            *phi_i += w * (table.value(s.with(i)) - table.value(s));
        }
    }
    Ok(AttributionVector::from(phi))
}

/// Exact pairwise Shapley-Taylor indices: main effects on the diagonal,
/// interaction terms off it.
pub fn brute_force_shapley_taylor<G: Game>(game: &G) -> Result<InteractionMatrix> {
    let d = game.player_count();
    if d > TAYLOR_ORACLE_LIMIT {
        return Err(Error::TooManyPlayers {
            players: d,
            limit: TAYLOR_ORACLE_LIMIT,
        });
    }
    let table = TabularGame::tabulate(game)?;
    let everyone = Coalition::full(d);
    let empty = table.value(Coalition::EMPTY);
    let mut phi = InteractionMatrix::zeros(d);
    for i in 0..d {
        phi[(i, i)] = table.value(Coalition::singleton(i)) - empty;
        for j in 0..d {
            if i == j {
                continue;
            }
            let others = everyone.without(i).without(j);
            let mut acc = 0.0;
            for s in others.subsets() {
                let nabla =
                    table.value(s.with(i).with(j)) - table.value(s.with(j)) - table.value(s.with(i)) + table.value(s);
                acc += weight_exact(s.len(), d) * nabla;
            }
            phi[(i, j)] = acc;
        }
    }
    Ok(phi)
}
