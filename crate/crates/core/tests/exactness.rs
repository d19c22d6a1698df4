use std::sync::Arc;

use gridknn::data_io::{generate, DatasetSpec, Distribution};
use gridknn::geometry::{cell_of, BoundaryShape};
use gridknn::grid::count_in_shape_lower_bound;
use gridknn::pipeline::{plan_search, CandidateRecord};
use gridknn::{
    compute_distribution, oracle_aknnc, run_aknnc, Engine, GridSpec, KnnList, Method, Point, PipelineConfig,
    QuadTreeMerge, RadiusGrowth, TrainingSet,
};
use proptest::prelude::*;

fn instance(distribution: Distribution, d: usize, count: usize, train: f64, seed: u64) -> (Vec<Point>, TrainingSet) {
    let mut spec = DatasetSpec::new(distribution, d, count, seed);
    spec.train_fraction = train;
    let data = generate(&spec).unwrap();
    (data.input, data.training)
}

fn distribution_strategy() -> impl Strategy<Value = Distribution> {
    prop_oneof![
        Just(Distribution::Uniform),
        Just(Distribution::PowerLaw { alpha: 2.0 }),
        Just(Distribution::PowerLaw { alpha: 4.0 }),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn pipeline_matches_oracle(
        distribution in distribution_strategy(),
        d in 1usize..=4,
        k in prop::sample::select(vec![1usize, 2, 5, 10]),
        n in 1u32..=4,
        count in 60usize..400,
        seed in any::<u64>(),
        threads in 1usize..=3,
    ) {
        let (input, training) = instance(distribution, d, count, 0.3, seed);
        prop_assume!(training.len() >= k);
        let grid = GridSpec::with_granularity(d, n).unwrap();
        let oracle = oracle_aknnc(&input, &training, k).unwrap();
        let methods: [Arc<dyn Method>; 2] = [Arc::new(RadiusGrowth), Arc::new(QuadTreeMerge)];
        for method in methods {
            let mut config = PipelineConfig::new(method.clone(), k, grid, threads);
            config.spill_threshold = 97;
            let out = run_aknnc(&input, &training, &config).unwrap();
            prop_assert_eq!(&out.knn, &oracle.knn, "{} lists", method.name());
            prop_assert_eq!(&out.classifications, &oracle.classifications, "{} classes", method.name());
        }
    }

    #[test]
    fn lattice_points_match_oracle(
        d in 1usize..=3,
        n in 1u32..=3,
        k in 1usize..6,
        raw in prop::collection::vec((prop::collection::vec(0u32..=16, 3), any::<bool>(), 0u32..3), 10..120),
    ) {
        // coordinates on multiples of 1/16 sit on cell faces and produce exact ties
        let classes = gridknn::ClassTable::lettered(3);
        let mut input = Vec::new();
        let mut points = Vec::new();
        for (i, (c, is_train, class)) in raw.into_iter().enumerate() {
            let coords: Vec<f64> = c[..d].iter().map(|&q| f64::from(q) / 16.0).collect();
            if is_train {
                points.push(Point::labeled(i as u64, coords, gridknn::ClassId(class)));
            } else {
                input.push(Point::unlabeled(i as u64, coords));
            }
        }
        prop_assume!(points.len() >= k);
        let training = TrainingSet { points, classes };
        let grid = GridSpec::with_granularity(d, n).unwrap();
        let oracle = oracle_aknnc(&input, &training, k).unwrap();
        for method in [Arc::new(RadiusGrowth) as Arc<dyn Method>, Arc::new(QuadTreeMerge)] {
            let out = run_aknnc(&input, &training, &PipelineConfig::new(method, k, grid, 2)).unwrap();
            prop_assert_eq!(&out.knn, &oracle.knn);
            prop_assert_eq!(&out.classifications, &oracle.classifications);
        }
    }

    #[test]
    fn odd_grids_match_oracle(
        d in 1usize..=3,
        g in prop::sample::select(vec![3u64, 5, 6, 7, 12]),
        k in 1usize..8,
        seed in any::<u64>(),
    ) {
        let (input, training) = instance(Distribution::PowerLaw { alpha: 3.0 }, d, 200, 0.25, seed);
        let grid = GridSpec::new(d, g).unwrap();
        let out = run_aknnc(&input, &training, &PipelineConfig::new(Arc::new(RadiusGrowth), k, grid, 2)).unwrap();
        let oracle = oracle_aknnc(&input, &training, k).unwrap();
        prop_assert_eq!(out.knn, oracle.knn);
        prop_assert_eq!(out.classifications, oracle.classifications);
    }

    #[test]
    fn grown_radius_covers_the_true_neighbors(
        d in 1usize..=3,
        n in 1u32..=4,
        k in 1usize..12,
        seed in any::<u64>(),
    ) {
        let (input, training) = instance(Distribution::PowerLaw { alpha: 2.0 }, d, 240, 0.4, seed);
        let grid = GridSpec::with_granularity(d, n).unwrap();
        let engine = Engine::new(1).unwrap();
        let stats = compute_distribution(&engine, &training.points, &grid).unwrap();
        let partition = RadiusGrowth.partition(&stats, k, &grid).unwrap();
        let oracle = oracle_aknnc(&input, &training, k).unwrap();
        for (p, (_, truth)) in input.iter().zip(&oracle.knn) {
            // a candidate list built from the home cell alone
            let home = cell_of(&p.coords, &grid).unwrap();
            let local: Vec<_> = training.points.iter()
                .filter(|t| cell_of(&t.coords, &grid).unwrap() == home)
                .map(|t| gridknn::NeighborEntry {
                    neighbor_id: t.id,
                    distance: gridknn::euclidean_distance(&p.coords, &t.coords).unwrap(),
                    class: t.class.unwrap(),
                })
                .collect();
            let candidate = CandidateRecord {
                point_id: p.id,
                coords: p.coords.clone(),
                unit: home.0,
                knn: KnnList::select(local, k),
                complete: false,
                bound: f64::INFINITY,
            };
            let plan = plan_search(&candidate, &stats, partition.as_ref(), &grid, k).unwrap();
            let shape = BoundaryShape::new(&p.coords, plan.radius);
            if candidate.knn.len() < k {
                prop_assert!(count_in_shape_lower_bound(&shape, &stats, &grid) >= k as u64);
            }
            prop_assert!(truth.radius().unwrap() <= plan.radius);
        }
    }
}

#[test]
fn k_equal_to_training_size() {
    let (input, training) = instance(Distribution::Uniform, 2, 120, 0.1, 8);
    let k = training.len();
    let grid = GridSpec::with_granularity(2, 3).unwrap();
    for method in [Arc::new(RadiusGrowth) as Arc<dyn Method>, Arc::new(QuadTreeMerge)] {
        let out = run_aknnc(&input, &training, &PipelineConfig::new(method, k, grid, 2)).unwrap();
        assert!(out.knn.iter().all(|(_, l)| l.len() == k));
        assert_eq!(out.knn, oracle_aknnc(&input, &training, k).unwrap().knn);
    }
}

#[test]
fn duplicate_coordinates_tie_on_id() {
    let classes = gridknn::ClassTable::new(["A", "B"]);
    let a = classes.id("A").unwrap();
    let b = classes.id("B").unwrap();
    let training = TrainingSet {
        points: vec![
            Point::labeled(30, vec![0.5, 0.5], b),
            Point::labeled(10, vec![0.5, 0.5], a),
            Point::labeled(20, vec![0.5, 0.5], b),
            Point::labeled(40, vec![0.9, 0.1], a),
        ],
        classes,
    };
    let input = vec![Point::unlabeled(1, vec![0.25, 0.25]), Point::unlabeled(2, vec![0.5, 0.5])];
    let grid = GridSpec::with_granularity(2, 2).unwrap();
    for method in [Arc::new(RadiusGrowth) as Arc<dyn Method>, Arc::new(QuadTreeMerge)] {
        let out = run_aknnc(&input, &training, &PipelineConfig::new(method, 2, grid, 1)).unwrap();
        let ids: Vec<u64> = out.knn[1].1.entries().iter().map(|e| e.neighbor_id).collect();
        assert_eq!(ids, vec![10, 20]);
        assert_eq!(out.knn, oracle_aknnc(&input, &training, 2).unwrap().knn);
    }
}
