//! Kernel-level index identifiers and compact index sets.

use std::fmt;

/// Maximum number of distinct indices a kernel may use.
pub const MAX_INDICES: usize = 64;

/// Position of an index in a kernel's index table.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct IndexId(pub u8);

impl IndexId {
    #[inline]
    pub fn pos(self) -> usize {
        self.0 as usize
    }
}

/// Bitset over the indices of one kernel.
#[derive(Copy, Clone, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct IndexSet(pub u64);

impl IndexSet {
    pub const EMPTY: IndexSet = IndexSet(0);

    pub fn from_ids<I: IntoIterator<Item = IndexId>>(ids: I) -> Self {
        let mut s = IndexSet::EMPTY;
        for id in ids {
            s.insert(id);
        }
        s
    }

    #[inline]
    pub fn insert(&mut self, id: IndexId) {
        self.0 |= 1u64 << id.0;
    }

    #[inline]
    pub fn remove(&mut self, id: IndexId) {
        self.0 &= !(1u64 << id.0);
    }

    #[inline]
    pub fn with(self, id: IndexId) -> Self {
        IndexSet(self.0 | (1u64 << id.0))
    }

    #[inline]
    pub fn contains(self, id: IndexId) -> bool {
        self.0 & (1u64 << id.0) != 0
    }

    #[inline]
    pub fn union(self, other: IndexSet) -> Self {
        IndexSet(self.0 | other.0)
    }

    #[inline]
    pub fn intersect(self, other: IndexSet) -> Self {
        IndexSet(self.0 & other.0)
    }

    #[inline]
    pub fn minus(self, other: IndexSet) -> Self {
        IndexSet(self.0 & !other.0)
    }

    #[inline]
    pub fn is_subset(self, other: IndexSet) -> bool {
        self.0 & !other.0 == 0
    }

    #[inline]
    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    #[inline]
    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    /// Ids in increasing order.
    pub fn iter(self) -> impl Iterator<Item = IndexId> {
        let mut bits = self.0;
        std::iter::from_fn(move || {
            if bits == 0 {
                None
            } else {
                let tz = bits.trailing_zeros();
                bits &= bits - 1;
                Some(IndexId(tz as u8))
            }
        })
    }
}

impl fmt::Debug for IndexSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_set().entries(self.iter().map(|i| i.0)).finish()
    }
}

impl FromIterator<IndexId> for IndexSet {
    fn from_iter<T: IntoIterator<Item = IndexId>>(iter: T) -> Self {
        IndexSet::from_ids(iter)
    }
}
