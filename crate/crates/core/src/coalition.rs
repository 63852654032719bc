//! Fixed-capacity player sets.

use std::fmt;

/// Maximum number of players a [`Coalition`] can hold.
pub const COALITION_CAPACITY: usize = 64;

/// A set of player indices below [`COALITION_CAPACITY`], stored as one machine
/// word with its cardinality cached.
#[derive(Clone, Copy, Default, PartialEq, Eq, Hash)]
pub struct Coalition {
    bits: u64,
    len: u32,
}

impl Coalition {
    pub const EMPTY: Coalition = Coalition { bits: 0, len: 0 };

    pub fn from_bits(bits: u64) -> Self {
        Coalition {
            bits,
            len: bits.count_ones(),
        }
    }

    /// The set `{0, 1, ..., n - 1}`.
    pub fn full(n: usize) -> Self {
        assert!(n <= COALITION_CAPACITY, "coalition capacity exceeded");
        if n == COALITION_CAPACITY {
            Self::from_bits(u64::MAX)
        } else {
            Self::from_bits((1u64 << n) - 1)
        }
    }

    pub fn singleton(i: usize) -> Self {
        Self::EMPTY.with(i)
    }

    pub fn bits(self) -> u64 {
        self.bits
    }

    pub fn len(self) -> usize {
        self.len as usize
    }

    pub fn is_empty(self) -> bool {
        self.len == 0
    }

    pub fn contains(self, i: usize) -> bool {
        i < COALITION_CAPACITY && self.bits & (1u64 << i) != 0
    }

    /// Copy of `self` with `i` inserted.
    #[must_use]
    pub fn with(self, i: usize) -> Self {
        assert!(i < COALITION_CAPACITY, "player {i} exceeds coalition capacity");
        let mask = 1u64 << i;
        if self.bits & mask != 0 {
            self
        } else {
            Coalition {
                bits: self.bits | mask,
                len: self.len + 1,
            }
        }
    }

    /// Copy of `self` with `i` removed.
    #[must_use]
    pub fn without(self, i: usize) -> Self {
        if !self.contains(i) {
            self
        } else {
            Coalition {
                bits: self.bits & !(1u64 << i),
                len: self.len - 1,
            }
        }
    }

    pub fn insert(&mut self, i: usize) {
        *self = self.with(i);
    }

    #[must_use]
    pub fn union(self, other: Coalition) -> Self {
        Self::from_bits(self.bits | other.bits)
    }

    #[must_use]
    pub fn intersection(self, other: Coalition) -> Self {
        Self::from_bits(self.bits & other.bits)
    }

    #[must_use]
    pub fn difference(self, other: Coalition) -> Self {
        Self::from_bits(self.bits & !other.bits)
    }

    pub fn is_disjoint(self, other: Coalition) -> bool {
        self.bits & other.bits == 0
    }

    pub fn is_subset(self, other: Coalition) -> bool {
        self.bits & !other.bits == 0
    }

    /// Members in increasing order.
    pub fn iter(self) -> Members {
        Members { bits: self.bits }
    }

    /// Every subset of `self`, in increasing order of the subset's bit pattern.
    pub fn subsets(self) -> Subsets {
        Subsets {
            universe: self.bits,
            next: Some(0),
        }
    }
}

impl fmt::Debug for Coalition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_set().entries(self.iter()).finish()
    }
}

impl FromIterator<usize> for Coalition {
    fn from_iter<I: IntoIterator<Item = usize>>(iter: I) -> Self {
        iter.into_iter().fold(Coalition::EMPTY, Coalition::with)
    }
}

impl IntoIterator for Coalition {
    type Item = usize;
    type IntoIter = Members;

    fn into_iter(self) -> Members {
        self.iter()
    }
}

pub struct Members {
    bits: u64,
}

impl Iterator for Members {
    type Item = usize;

    fn next(&mut self) -> Option<usize> {
        if self.bits == 0 {
            return None;
        }
        let i = self.bits.trailing_zeros() as usize;
        self.bits &= self.bits - 1;
        Some(i)
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        let n = self.bits.count_ones() as usize;
        (n, Some(n))
    }
}

impl ExactSizeIterator for Members {}

/// Submask enumeration: walks all subsets of a fixed universe.
pub struct Subsets {
    universe: u64,
    next: Option<u64>,
}

impl Iterator for Subsets {
    type Item = Coalition;

    fn next(&mut self) -> Option<Coalition> {
        let current = self.next?;
        self.next = if current == self.universe {
            None
        } else {
            // standard "next submask in increasing order" step
            Some((current | !self.universe).wrapping_add(1) & self.universe)
        };
        Some(Coalition::from_bits(current))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cardinality_tracks_inserts_and_removals() {
        let mut s = Coalition::EMPTY;
        s.insert(3);
        s.insert(3);
        s.insert(63);
        assert_eq!(s.len(), 2);
        let s = s.without(3).without(5);
        assert_eq!(s.len(), 1);
        assert!(s.contains(63));
        assert!(!s.contains(64));
    }

    #[test]
    fn full_handles_capacity() {
        assert_eq!(Coalition::full(0), Coalition::EMPTY);
        assert_eq!(Coalition::full(64).len(), 64);
        assert_eq!(Coalition::full(3).iter().collect::<Vec<_>>(), vec![0, 1, 2]);
    }

    #[test]
    fn subsets_enumerate_in_increasing_order() {
        let u: Coalition = [1, 3, 4].into_iter().collect();
        let subs: Vec<u64> = u.subsets().map(Coalition::bits).collect();
        assert_eq!(subs.len(), 8);
        assert!(subs.windows(2).all(|w| w[0] < w[1]));
        assert!(subs.iter().all(|&b| b & !u.bits() == 0));
        assert_eq!(Coalition::EMPTY.subsets().count(), 1);
    }

    #[test]
    #[should_panic]
    fn rejects_out_of_capacity_player() {
        let _ = Coalition::singleton(64);
    }
}
