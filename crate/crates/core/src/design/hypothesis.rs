use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest number of experimental arms (existing plus added) a closure may
/// span; the closure of six arms has 63 members, which fits a `u64` bitset.
pub const MAX_ARMS: usize = 6;

/// Nonempty set of experimental-arm indices (0-based) naming an intersection
/// null hypothesis. Displayed 1-based, e.g. `{1,2}`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "Vec<usize>", into = "Vec<usize>")]
pub struct HypothesisSet(u32);

impl HypothesisSet {
    pub fn new(members: &[usize]) -> Result<Self> {
        if members.is_empty() {
            return Err(Error::domain("hypothesis set must be nonempty"));
        }
        let mut mask = 0u32;
        for &k in members {
            if k >= MAX_ARMS {
                return Err(Error::domain(format!("arm index {k} exceeds the supported {MAX_ARMS} arms")));
            }
            mask |= 1 << k;
        }
        Ok(HypothesisSet(mask))
    }

    pub fn from_mask(mask: u32) -> Self {
        debug_assert!(mask != 0 && mask < (1 << MAX_ARMS));
        HypothesisSet(mask)
    }

    pub fn full(arms: usize) -> Self {
        HypothesisSet((1u32 << arms) - 1)
    }

    pub fn singleton(arm: usize) -> Self {
        HypothesisSet(1 << arm)
    }

    /// Every nonempty subset of `arms` arms, in increasing mask order.
    pub fn closure(arms: usize) -> impl Iterator<Item = HypothesisSet> {
        (1u32..(1u32 << arms)).map(HypothesisSet)
    }

    #[inline]
    pub fn mask(self) -> u32 {
        self.0
    }

    /// Position of this set in [`HypothesisSet::closure`].
    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize - 1
    }

    #[inline]
    pub fn contains(self, arm: usize) -> bool {
        self.0 >> arm & 1 == 1
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(self) -> bool {
        false
    }

    pub fn members(self) -> impl Iterator<Item = usize> {
        (0..MAX_ARMS).filter(move |&k| self.contains(k))
    }

    /// Intersection with an arbitrary arm mask, if nonempty.
    pub fn restrict(self, mask: u32) -> Option<HypothesisSet> {
        match self.0 & mask {
            0 => None,
            m => Some(HypothesisSet(m)),
        }
    }

    pub fn is_subset_of(self, mask: u32) -> bool {
        self.0 & !mask == 0
    }
}

impl fmt::Display for HypothesisSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.members().map(|k| (k + 1).to_string()).collect();
        write!(f, "{{{}}}", parts.join(","))
    }
}

impl TryFrom<Vec<usize>> for HypothesisSet {
    type Error = Error;

    /// 1-based arm numbers, as written in design documents.
    fn try_from(arms: Vec<usize>) -> Result<Self> {
        if arms.contains(&0) {
            return Err(Error::domain("arm numbers are 1-based"));
        }
        let zero_based: Vec<usize> = arms.iter().map(|a| a - 1).collect();
        HypothesisSet::new(&zero_based)
    }
}

impl From<HypothesisSet> for Vec<usize> {
    fn from(h: HypothesisSet) -> Self {
        h.members().map(|k| k + 1).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn closure_of_two() {
        let all: Vec<String> = HypothesisSet::closure(2).map(|h| h.to_string()).collect();
        assert_eq!(all, ["{1}", "{2}", "{1,2}"]);
        assert_eq!(HypothesisSet::closure(4).count(), 15);
    }

    #[test]
    fn members_and_index() {
        let h = HypothesisSet::new(&[0, 2]).unwrap();
        assert_eq!(h.members().collect::<Vec<_>>(), [0, 2]);
        assert_eq!(h.index(), 4);
        assert!(h.contains(2) && !h.contains(1));
        assert_eq!(h.restrict(0b011), Some(HypothesisSet::singleton(0)));
        assert_eq!(h.restrict(0b010), None);
    }

    #[test]
    fn invalid_sets() {
        assert!(HypothesisSet::new(&[]).is_err());
        assert!(HypothesisSet::new(&[MAX_ARMS]).is_err());
        assert!(HypothesisSet::try_from(vec![0]).is_err());
    }
}
