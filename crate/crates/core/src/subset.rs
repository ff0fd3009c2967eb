//! Index sets over at most [`MAX_HYPOTHESES`] hypotheses, stored as bitmasks.

use std::fmt;

use crate::error::{Error, Result};

/// Closure enumerates `2^m - 1` intersections; beyond this it stops being
/// a desk-scale computation.
pub const MAX_HYPOTHESES: usize = 20;

/// A subset of `{0, .., m-1}`. Bit `i` set means hypothesis `i` is a member.
///
/// Ordering follows the bitmask value, which is the canonical report order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct IndexSet(u32);

impl IndexSet {
    pub const EMPTY: IndexSet = IndexSet(0);

    pub fn from_mask(mask: u32) -> Self {
        IndexSet(mask)
    }

    /// The full set `{0, .., m-1}`.
    pub fn full(m: usize) -> Self {
        debug_assert!(m <= MAX_HYPOTHESES);
        IndexSet(((1u64 << m) - 1) as u32)
    }

    pub fn singleton(i: usize) -> Self {
        IndexSet(1 << i)
    }

    /// Build from 0-based indices, rejecting duplicates and indices `>= m`.
    pub fn from_indices(indices: &[usize], m: usize) -> Result<Self> {
        let mut mask = 0u32;
        for &i in indices {
            if i >= m {
                return Err(Error::Domain(format!("index {} out of range 1..={m}", i + 1)));
            }
            if mask & (1 << i) != 0 {
                return Err(Error::Domain(format!("duplicate index {}", i + 1)));
            }
            mask |= 1 << i;
        }
        Ok(IndexSet(mask))
    }

    pub fn mask(self) -> u32 {
        self.0
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn contains(self, i: usize) -> bool {
        i < 32 && self.0 & (1 << i) != 0
    }

    pub fn insert(self, i: usize) -> Self {
        IndexSet(self.0 | (1 << i))
    }

    pub fn remove(self, i: usize) -> Self {
        IndexSet(self.0 & !(1 << i))
    }

    pub fn is_subset_of(self, other: IndexSet) -> bool {
        self.0 & !other.0 == 0
    }

    pub fn intersect(self, other: IndexSet) -> Self {
        IndexSet(self.0 & other.0)
    }

    /// Members in increasing order.
    pub fn iter(self) -> Members {
        Members(self.0)
    }

    /// Position of member `i` within the sorted member list.
    pub fn rank_of(self, i: usize) -> Option<usize> {
        if self.contains(i) {
            Some((self.0 & ((1u32 << i) - 1)).count_ones() as usize)
        } else {
            None
        }
    }

    /// 1-based member list, as used in external documents.
    pub fn to_one_based(self) -> Vec<usize> {
        self.iter().map(|i| i + 1).collect()
    }

    /// Nonempty proper subsets, in decreasing mask order.
    pub fn proper_subsets(self) -> ProperSubsets {
        ProperSubsets { full: self.0, next: (self.0.wrapping_sub(1)) & self.0 }
    }
}

impl fmt::Display for IndexSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{")?;
        for (k, i) in self.iter().enumerate() {
            if k > 0 {
                write!(f, ",")?;
            }
            write!(f, "{}", i + 1)?;
        }
        write!(f, "}}")
    }
}

impl IntoIterator for IndexSet {
    type Item = usize;
    type IntoIter = Members;

    fn into_iter(self) -> Members {
        self.iter()
    }
}

/// Iterator over set members, lowest first.
#[derive(Debug, Clone)]
pub struct Members(u32);

impl Iterator for Members {
    type Item = usize;

    fn next(&mut self) -> Option<usize> {
        if self.0 == 0 {
            return None;
        }
        let i = self.0.trailing_zeros() as usize;
        self.0 &= self.0 - 1;
        Some(i)
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        let n = self.0.count_ones() as usize;
        (n, Some(n))
    }
}

impl ExactSizeIterator for Members {}

/// Submask enumeration `s -> (s - 1) & full`.
#[derive(Debug, Clone)]
pub struct ProperSubsets {
    full: u32,
    next: u32,
}

impl Iterator for ProperSubsets {
    type Item = IndexSet;

    fn next(&mut self) -> Option<IndexSet> {
        if self.next == 0 {
            return None;
        }
        let cur = self.next;
        self.next = (cur - 1) & self.full;
        Some(IndexSet(cur))
    }
}

/// All nonempty subsets of `{0, .., m-1}` in increasing mask order.
pub fn nonempty_subsets(m: usize) -> impl DoubleEndedIterator<Item = IndexSet> {
    (1u32..=IndexSet::full(m).0).map(IndexSet)
}

pub(crate) fn check_size(m: usize) -> Result<()> {
    if m == 0 {
        return Err(Error::Domain("at least one hypothesis is required".into()));
    }
    if m > MAX_HYPOTHESES {
        return Err(Error::TooManyHypotheses { m, max: MAX_HYPOTHESES });
    }
    Ok(())
}
