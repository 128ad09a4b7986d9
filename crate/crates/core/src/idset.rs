use std::fmt;

use fixedbitset::FixedBitSet;

use crate::world::NodeId;

/// Exact set of node ids, used for coverage instrumentation.
#[derive(Clone, PartialEq, Eq, Default)]
pub struct IdSet {
    bits: FixedBitSet,
    len: usize,
}

impl IdSet {
    pub fn with_capacity(n: usize) -> Self {
        Self { bits: FixedBitSet::with_capacity(n), len: 0 }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn contains(&self, id: NodeId) -> bool {
        self.bits.contains(id.index())
    }

    /// Returns true if the id was not present before.
    pub fn insert(&mut self, id: NodeId) -> bool {
        let i = id.index();
        if i >= self.bits.len() {
            self.bits.grow(i + 1);
        }
        let fresh = !self.bits.put(i);
        if fresh {
            self.len += 1;
        }
        fresh
    }

    pub fn union_with(&mut self, other: &IdSet) {
        if other.bits.len() > self.bits.len() {
            self.bits.grow(other.bits.len());
        }
        self.bits.union_with(&other.bits);
        self.len = self.bits.count_ones(..);
    }

    pub fn iter(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.bits.ones().map(NodeId::from_index)
    }

    pub fn is_subset(&self, other: &IdSet) -> bool {
        self.bits.is_subset(&other.bits)
    }
}

impl FromIterator<NodeId> for IdSet {
    fn from_iter<T: IntoIterator<Item = NodeId>>(iter: T) -> Self {
        let mut set = IdSet::default();
        for id in iter {
            set.insert(id);
        }
        set
    }
}

impl fmt::Debug for IdSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_set().entries(self.iter().map(|id| id.0)).finish()
    }
}
