//! Brute-force reference classifier for small instances.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::geometry::distance;
use crate::knn::{Classification, KnnList, NeighborEntry};
use crate::point::{ClassId, Point, TrainingSet};

/// Largest `|I| * |T|` the quadratic scan accepts.
pub const ORACLE_PAIR_LIMIT: u128 = 100_000_000;

#[derive(Debug, Clone, PartialEq)]
pub struct OracleOutput {
    pub knn: Vec<(u64, KnnList)>,
    pub classifications: Vec<Classification>,
}

/// Exact lists by scanning every training point for every input point,
/// sorted by id like the pipeline's output.
pub fn oracle_aknnc(input: &[Point], training: &TrainingSet, k: usize) -> Result<OracleOutput> {
    let pairs = input.len() as u128 * training.len() as u128;
    if pairs > ORACLE_PAIR_LIMIT {
        return Err(Error::OracleGuard {
            pairs,
            limit: ORACLE_PAIR_LIMIT,
        });
    }
    let mut order: Vec<&Point> = input.iter().collect();
    order.sort_by_key(|p| p.id);

    let mut knn = Vec::with_capacity(order.len());
    let mut classifications = Vec::with_capacity(order.len());
    for p in order {
        let mut all: Vec<NeighborEntry> = training
            .points
            .iter()
            .map(|t| NeighborEntry {
                neighbor_id: t.id,
                distance: distance(&p.coords, &t.coords),
                class: t.class.expect("training points are labeled"),
            })
            .collect();
        all.sort_by(|a, b| {
            a.distance
                .total_cmp(&b.distance)
                .then(a.neighbor_id.cmp(&b.neighbor_id))
        });
        all.truncate(k);
        if let Some(class) = vote(&all) {
            classifications.push(Classification {
                point_id: p.id,
                class,
            });
        }
        knn.push((p.id, KnnList::from(all)));
    }
    Ok(OracleOutput {
        knn,
        classifications,
    })
}

fn vote(sorted: &[NeighborEntry]) -> Option<ClassId> {
    let mut counts: BTreeMap<ClassId, usize> = BTreeMap::new();
    for e in sorted {
        *counts.entry(e.class).or_default() += 1;
    }
    let best = counts.values().copied().max()?;
    // the first entry (nearest) whose class reaches the top count wins
    sorted
        .iter()
        .filter(|e| counts[&e.class] == best)
        .map(|e| (e.distance, e.class))
        .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)))
        .map(|(_, c)| c)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::point::ClassTable;

    fn training(points: &[(u64, f64, &str)]) -> TrainingSet {
        let classes = ClassTable::new(points.iter().map(|p| p.2));
        TrainingSet {
            points: points
                .iter()
                .map(|&(id, x, c)| Point::labeled(id, vec![x], classes.id(c).unwrap()))
                .collect(),
            classes,
        }
    }

    #[test]
    fn k_equal_to_training_size_returns_everything() {
        let t = training(&[(1, 0.9, "A"), (2, 0.1, "B"), (3, 0.5, "A")]);
        let out = oracle_aknnc(&[Point::unlabeled(10, vec![0.0])], &t, 3).unwrap();
        let ids: Vec<u64> = out.knn[0].1.entries().iter().map(|e| e.neighbor_id).collect();
        assert_eq!(ids, vec![2, 3, 1]);
        assert_eq!(out.classifications[0].class, t.classes.id("A").unwrap());
    }

    #[test]
    fn coincident_point() {
        let t = training(&[(1, 0.3, "A"), (2, 0.7, "B")]);
        let out = oracle_aknnc(&[Point::unlabeled(5, vec![0.7])], &t, 1).unwrap();
        let e = out.knn[0].1.entries()[0];
        assert_eq!((e.neighbor_id, e.distance), (2, 0.0));
    }

    #[test]
    fn vote_tie_goes_to_nearest_then_smallest_class() {
        let t = training(&[(1, 0.4, "B"), (2, 0.7, "A")]);
        let out = oracle_aknnc(&[Point::unlabeled(5, vec![0.5])], &t, 2).unwrap();
        assert_eq!(t.classes.label(out.classifications[0].class), "B");
        let t = training(&[(1, 0.4, "B"), (2, 0.6, "A")]);
        let out = oracle_aknnc(&[Point::unlabeled(5, vec![0.5])], &t, 2).unwrap();
        assert_eq!(t.classes.label(out.classifications[0].class), "A");
    }

    #[test]
    fn guard_refuses_large_instances() {
        let t = training(&[(1, 0.4, "B")]);
        let input: Vec<Point> = (0..10).map(|i| Point::unlabeled(i, vec![0.5])).collect();
        assert!(oracle_aknnc(&input, &t, 1).is_ok());
        let big = TrainingSet {
            points: vec![t.points[0].clone(); 10_001],
            classes: t.classes.clone(),
        };
        let many: Vec<Point> = (0..10_001).map(|i| Point::unlabeled(i, vec![0.5])).collect();
        assert!(matches!(
            oracle_aknnc(&many, &big, 1),
            Err(Error::OracleGuard { .. })
        ));
    }
}
