//! Neighbor lists and the majority vote.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::point::ClassId;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NeighborEntry {
    pub neighbor_id: u64,
    pub distance: f64,
    pub class: ClassId,
}

impl NeighborEntry {
    /// Total order used everywhere: distance, then neighbor id.
    #[inline]
    pub fn rank(&self, other: &Self) -> Ordering {
        self.distance
            .total_cmp(&other.distance)
            .then(self.neighbor_id.cmp(&other.neighbor_id))
    }
}

/// At most `k` entries, strictly ascending by `(distance, neighbor_id)`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct KnnList {
    entries: Vec<NeighborEntry>,
}

impl KnnList {
    pub fn empty() -> Self {
        Self::default()
    }

    /// Keeps the `k` best entries of an arbitrary candidate set. Duplicate
    /// neighbor ids must not occur in `candidates`.
    pub fn select(mut candidates: Vec<NeighborEntry>, k: usize) -> Self {
        if candidates.len() > k {
            if k == 0 {
                candidates.clear();
            } else {
                candidates.select_nth_unstable_by(k - 1, NeighborEntry::rank);
                candidates.truncate(k);
            }
        }
        candidates.shrink_to_fit();
        candidates.sort_unstable_by(NeighborEntry::rank);
        Self {
            entries: candidates,
        }
    }

    /// The `k` best entries of the union of several lists, deduplicated by
    /// neighbor id.
    pub fn unify<'a>(lists: impl IntoIterator<Item = &'a KnnList>, k: usize) -> Self {
        let mut all: Vec<NeighborEntry> = lists
            .into_iter()
            .flat_map(|l| l.entries.iter().copied())
            .collect();
        all.sort_unstable_by(NeighborEntry::rank);
        all.dedup_by_key(|e| e.neighbor_id);
        // entries sharing an id carry the same distance, so they sit together
        all.truncate(k);
        all.shrink_to_fit();
        Self { entries: all }
    }

    pub fn entries(&self) -> &[NeighborEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Distance of the farthest kept entry.
    pub fn radius(&self) -> Option<f64> {
        self.entries.last().map(|e| e.distance)
    }

    pub fn is_well_formed(&self, k: usize) -> bool {
        self.entries.len() <= k
            && self
                .entries
                .windows(2)
                .all(|w| w[0].rank(&w[1]) == Ordering::Less)
    }
}

impl From<Vec<NeighborEntry>> for KnnList {
    fn from(entries: Vec<NeighborEntry>) -> Self {
        let k = entries.len();
        Self::select(entries, k)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Classification {
    pub point_id: u64,
    pub class: ClassId,
}

/// Most frequent class among the entries. Ties go to the class whose
/// nearest entry is closest, then to the smallest class label.
pub fn majority_class(list: &KnnList) -> Option<ClassId> {
    // (class, count, nearest distance); classes are few, a vec beats a map
    let mut tally: Vec<(ClassId, usize, f64)> = Vec::new();
    for e in list.entries() {
        match tally.iter_mut().find(|t| t.0 == e.class) {
            Some(t) => t.1 += 1,
            None => tally.push((e.class, 1, e.distance)),
        }
    }
    tally
        .into_iter()
        .min_by(|a, b| {
            b.1.cmp(&a.1)
                .then(a.2.total_cmp(&b.2))
                .then(a.0.cmp(&b.0))
        })
        .map(|t| t.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn e(id: u64, distance: f64, class: u32) -> NeighborEntry {
        NeighborEntry {
            neighbor_id: id,
            distance,
            class: ClassId(class),
        }
    }

    #[test]
    fn select_keeps_k_smallest() {
        let l = KnnList::select(vec![e(3, 0.3, 0), e(1, 0.1, 0), e(2, 0.2, 0)], 2);
        assert_eq!(l.entries(), &[e(1, 0.1, 0), e(2, 0.2, 0)]);
        assert_eq!(KnnList::select(vec![], 3).len(), 0);
        assert_eq!(KnnList::select(vec![e(1, 0.1, 0)], 0).len(), 0);
    }

    #[test]
    fn ties_break_on_id() {
        let l = KnnList::select(vec![e(9, 0.5, 0), e(4, 0.5, 1), e(7, 0.5, 2)], 2);
        assert_eq!(l.entries(), &[e(4, 0.5, 1), e(7, 0.5, 2)]);
    }

    #[test]
    fn unify_examples() {
        let one = KnnList::from(vec![e(1, 0.1, 0), e(2, 0.5, 0)]);
        assert_eq!(KnnList::unify([&one], 2), one);
        let other = KnnList::from(vec![e(1, 0.1, 0), e(3, 0.3, 0)]);
        let u = KnnList::unify([&one, &other], 2);
        assert_eq!(u.entries(), &[e(1, 0.1, 0), e(3, 0.3, 0)]);
    }

    #[test]
    fn vote_examples() {
        let l = KnnList::from(vec![e(1, 0.1, 0), e(2, 0.2, 0), e(3, 0.3, 1)]);
        assert_eq!(majority_class(&l), Some(ClassId(0)));
        let l = KnnList::from(vec![e(1, 0.1, 0), e(2, 0.2, 1)]);
        assert_eq!(majority_class(&l), Some(ClassId(0)));
        let l = KnnList::from(vec![e(1, 0.2, 1), e(2, 0.1, 0)]);
        assert_eq!(majority_class(&l), Some(ClassId(0)));
        let l = KnnList::from(vec![e(5, 0.4, 3)]);
        assert_eq!(majority_class(&l), Some(ClassId(3)));
        let l = KnnList::from(vec![e(1, 0.1, 2), e(2, 0.1, 1)]);
        assert_eq!(majority_class(&l), Some(ClassId(1)));
        assert_eq!(majority_class(&KnnList::empty()), None);
    }

    proptest! {
        #[test]
        fn unify_matches_sorting_the_union(
            ids in proptest::collection::vec(0u64..40, 0..60),
            splits in proptest::collection::vec(0usize..4, 60),
            k in 1usize..10,
        ) {
            // distance is a function of id so duplicates agree
            let entries: Vec<NeighborEntry> = ids.iter().map(|&id| e(id, (id % 7) as f64 / 8.0, 0)).collect();
            let mut parts: Vec<Vec<NeighborEntry>> = vec![Vec::new(); 4];
            for (i, x) in entries.iter().enumerate() {
                if !parts[splits[i]].iter().any(|y| y.neighbor_id == x.neighbor_id) {
                    parts[splits[i]].push(*x);
                }
            }
            let lists: Vec<KnnList> = parts.into_iter().map(|p| KnnList::select(p, k)).collect();
            let u = KnnList::unify(&lists, k);
            prop_assert!(u.is_well_formed(k));

            let mut flat: Vec<NeighborEntry> = lists.iter().flat_map(|l| l.entries().to_vec()).collect();
            flat.sort_by(|a, b| a.distance.partial_cmp(&b.distance).unwrap().then(a.neighbor_id.cmp(&b.neighbor_id)));
            let mut want: Vec<NeighborEntry> = Vec::new();
            for x in flat {
                if !want.iter().any(|y| y.neighbor_id == x.neighbor_id) {
                    want.push(x);
                }
            }
            want.truncate(k);
            prop_assert_eq!(u.entries(), &want[..]);
        }
    }
}
