//! The five staged jobs and their composition.
//!
//! 1. distribution: training points per cell
//! 2. primitive: candidate neighbors from the point's own unit
//! 3. update: grow the search radius if needed, then search every unit the
//!    ball overlaps
//! 4. unify: merge the per-unit list instances of each point
//! 5. classify: majority vote
//!
//! Every stage runs on the [`Engine`]; stage boundaries are barriers.

use std::collections::HashSet;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{cell_of_unchecked, distance, BoundaryShape, CellId, GridSpec};
use crate::grid::{compute_distribution, count_in_shape_lower_bound, CellStats, MergeStats};
use crate::knn::{majority_class, Classification, KnnList, NeighborEntry};
use crate::method::{Method, Partitioning};
use crate::point::{ClassId, Point, TrainingSet};
use crate::runtime::{DualJobSpec, Engine, JobSpec, JobTrace, Tagged, DEFAULT_SPILL_THRESHOLD};

pub const PHASES: [&str; 6] = [
    "distribution",
    "merge",
    "primitive",
    "update",
    "integrate",
    "classify",
];

/// Training record as shuffled to the units.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct TrainingValue {
    id: u64,
    class: ClassId,
    coords: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct InputValue {
    id: u64,
    coords: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateRecord {
    pub point_id: u64,
    pub coords: Vec<f64>,
    /// Unit the record is keyed by: a base cell, or a merged region.
    pub unit: u64,
    pub knn: KnnList,
    /// Set on records the update stage passes through unchanged.
    pub complete: bool,
    /// Neighbors farther than this cannot reach the final list.
    pub bound: f64,
}

/// Test-only fault modes for the verification harness.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Fault {
    /// Never emit overlap copies; every record is treated as complete.
    SkipOverlap,
}

/// Work performed, independent of timing and worker count.
#[derive(Debug, Default)]
pub struct WorkCounters {
    pub distance_computations: AtomicU64,
    pub overlap_copies: AtomicU64,
    pub growth_steps: AtomicU64,
    pub complete_after_primitive: AtomicU64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct WorkSummary {
    pub distance_computations: u64,
    pub overlap_copies: u64,
    pub growth_steps: u64,
    pub complete_after_primitive: u64,
}

impl WorkCounters {
    pub fn summary(&self) -> WorkSummary {
        WorkSummary {
            distance_computations: self.distance_computations.load(Ordering::Relaxed),
            overlap_copies: self.overlap_copies.load(Ordering::Relaxed),
            growth_steps: self.growth_steps.load(Ordering::Relaxed),
            complete_after_primitive: self.complete_after_primitive.load(Ordering::Relaxed),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhaseTiming {
    pub phase: &'static str,
    pub elapsed: Duration,
}

fn timed<T>(timings: &mut Vec<PhaseTiming>, phase: &'static str, f: impl FnOnce() -> Result<T>) -> Result<T> {
    let started = Instant::now();
    let out = f()?;
    timings.push(PhaseTiming {
        phase,
        elapsed: started.elapsed(),
    });
    Ok(out)
}

pub fn job1_distribution(
    engine: &Engine,
    training: &[Point],
    grid: &GridSpec,
    timings: &mut Vec<PhaseTiming>,
) -> Result<CellStats> {
    timed(timings, "distribution", || compute_distribution(engine, training, grid))
}

fn training_map<'a>(
    grid: &'a GridSpec,
    partition: &'a dyn Partitioning,
) -> impl Fn(&Point, &mut crate::runtime::Emitter<u64, TrainingValue>) -> Result<()> + Send + Sync + 'a {
    move |t: &Point, out| {
        let class = t
            .class
            .ok_or_else(|| Error::Config(format!("training point {} has no class", t.id)))?;
        let unit = partition.unit_of(cell_of_unchecked(&t.coords, grid));
        out.emit(
            &unit,
            &TrainingValue {
                id: t.id,
                class,
                coords: t.coords.clone(),
            },
        )?;
        Ok(())
    }
}

fn scan(p: &[f64], training: &[TrainingValue]) -> Vec<NeighborEntry> {
    training
        .iter()
        .map(|t| NeighborEntry {
            neighbor_id: t.id,
            distance: distance(p, &t.coords),
            class: t.class,
        })
        .collect()
}

/// Candidate neighbors of every input point from the training points that
/// share its unit.
pub fn job2_primitive(
    engine: &Engine,
    input: &[Point],
    training: &[Point],
    grid: &GridSpec,
    partition: &dyn Partitioning,
    k: usize,
    counters: &WorkCounters,
) -> Result<Vec<CandidateRecord>> {
    let job = DualJobSpec::new(
        "primitive",
        training_map(grid, partition),
        |p: &Point, out| {
            p.validate(grid)?;
            let unit = partition.unit_of(cell_of_unchecked(&p.coords, grid));
            out.emit(
                &unit,
                &InputValue {
                    id: p.id,
                    coords: p.coords.clone(),
                },
            )?;
            Ok(())
        },
        |unit: &u64, values: Vec<Tagged<TrainingValue, InputValue>>, out: &mut Vec<CandidateRecord>| {
            let (train, queries) = split(values);
            counters
                .distance_computations
                .fetch_add((train.len() * queries.len()) as u64, Ordering::Relaxed);
            for q in queries {
                let knn = KnnList::select(scan(&q.coords, &train), k);
                out.push(CandidateRecord {
                    point_id: q.id,
                    coords: q.coords,
                    unit: *unit,
                    knn,
                    complete: false,
                    bound: f64::INFINITY,
                });
            }
            Ok(())
        },
    );
    Ok(engine.execute_dual_input(&job, training, input)?)
}

fn split<A, B>(values: Vec<Tagged<A, B>>) -> (Vec<A>, Vec<B>) {
    let mut left = Vec::new();
    let mut right = Vec::new();
    for v in values {
        match v {
            Tagged::Left(a) => left.push(a),
            Tagged::Right(b) => right.push(b),
        }
    }
    (left, right)
}

/// Where the update stage searches for one point.
#[derive(Debug, Clone, PartialEq)]
pub struct SearchPlan {
    /// Final boundary radius; at least `k` training points lie within it.
    pub radius: f64,
    pub growth_steps: u64,
    /// Overlapped units, ascending; empty means the list is already final.
    pub units: Vec<u64>,
}

/// Draws the boundary shape of a candidate, grows it one cell width at a time
/// until the distribution counts certify `k` points inside, and collects the
/// units it overlaps.
pub fn plan_search(
    candidate: &CandidateRecord,
    stats: &CellStats,
    partition: &dyn Partitioning,
    grid: &GridSpec,
    k: usize,
) -> Result<SearchPlan> {
    let width = grid.cell_width();
    let center = candidate.coords.as_slice();
    let home_cell: CellId = cell_of_unchecked(center, grid);
    let mut radius = candidate.knn.radius().unwrap_or(width);
    let mut growth_steps = 0u64;
    if candidate.knn.len() < k {
        let base = radius;
        let ceiling = (grid.dims() as f64).sqrt() + width;
        while count_in_shape_lower_bound(&BoundaryShape::new(center, radius), stats, grid) < k as u64 {
            growth_steps += 1;
            radius = base + growth_steps as f64 * width;
            if radius > ceiling {
                return Err(Error::UnsatisfiableK {
                    point_id: candidate.point_id,
                    k,
                    available: stats.total(),
                });
            }
        }
    }
    // one ulp wider so that a training point exactly at the boundary radius,
    // sitting on the face of a tangent cell, is still searched
    let query = BoundaryShape::new(center, radius.next_up());
    let units = partition.overlapped_units(&query, home_cell, candidate.unit);
    Ok(SearchPlan {
        radius,
        growth_steps,
        units,
    })
}

/// Checks every candidate for overlaps. Candidates pass through unchanged;
/// those with overlaps also send a copy to each overlapped unit, which
/// answers with its own neighbors within the search radius.
#[allow(clippy::too_many_arguments)]
pub fn job3_update(
    engine: &Engine,
    candidates: &[CandidateRecord],
    training: &[Point],
    stats: &CellStats,
    grid: &GridSpec,
    partition: &dyn Partitioning,
    k: usize,
    counters: &WorkCounters,
    fault: Option<Fault>,
) -> Result<Vec<CandidateRecord>> {
    let job = DualJobSpec::new(
        "update",
        training_map(grid, partition),
        |c: &CandidateRecord, out| {
            let plan = plan_search(c, stats, partition, grid, k)?;
            counters
                .growth_steps
                .fetch_add(plan.growth_steps, Ordering::Relaxed);
            if plan.units.is_empty() || fault == Some(Fault::SkipOverlap) {
                counters
                    .complete_after_primitive
                    .fetch_add(1, Ordering::Relaxed);
                let mut done = c.clone();
                done.complete = true;
                out.emit(&c.unit, &done)?;
                return Ok(());
            }
            counters
                .overlap_copies
                .fetch_add(plan.units.len() as u64, Ordering::Relaxed);
            let mut home = c.clone();
            home.complete = true;
            out.emit(&c.unit, &home)?;
            // copies search the other units; unify merges them with the home list
            let mut copy = CandidateRecord {
                point_id: c.point_id,
                coords: c.coords.clone(),
                unit: c.unit,
                knn: KnnList::empty(),
                complete: false,
                bound: plan.radius,
            };
            for unit in plan.units {
                copy.unit = unit;
                out.emit(&unit, &copy)?;
            }
            Ok(())
        },
        |unit: &u64, values: Vec<Tagged<TrainingValue, CandidateRecord>>, out: &mut Vec<CandidateRecord>| {
            let (train, records) = split(values);
            for mut r in records {
                if !r.complete {
                    counters
                        .distance_computations
                        .fetch_add(train.len() as u64, Ordering::Relaxed);
                    let mut near = scan(&r.coords, &train);
                    near.retain(|e| e.distance <= r.bound);
                    if near.is_empty() {
                        continue;
                    }
                    r.knn = KnnList::select(near, k);
                    r.unit = *unit;
                }
                out.push(r);
            }
            Ok(())
        },
    );
    Ok(engine.execute_dual_input(&job, training, candidates)?)
}

/// One final list per point from all of its instances, in point id order.
pub fn job4_unify(engine: &Engine, updated: &[CandidateRecord], k: usize) -> Result<Vec<(u64, KnnList)>> {
    let job = JobSpec::new(
        "integrate",
        |r: &CandidateRecord, out| Ok(out.emit(&r.point_id, &r.knn)?),
        |id: &u64, lists: Vec<KnnList>, out: &mut Vec<(u64, KnnList)>| {
            out.push((*id, KnnList::unify(&lists, k)));
            Ok(())
        },
    );
    Ok(engine.execute(&job, updated)?)
}

pub fn job5_classify(engine: &Engine, lists: &[(u64, KnnList)], k: usize) -> Result<Vec<Classification>> {
    Ok(engine.map_only("classify", lists, |(id, list)| {
        majority_class(list)
            .map(|class| Classification {
                point_id: *id,
                class,
            })
            .ok_or(Error::UnsatisfiableK {
                point_id: *id,
                k,
                available: 0,
            })
    })?)
}

#[derive(Clone)]
pub struct PipelineConfig {
    pub method: Arc<dyn Method>,
    pub k: usize,
    pub grid: GridSpec,
    pub threads: usize,
    pub spill_threshold: usize,
    pub fault: Option<Fault>,
}

impl PipelineConfig {
    pub fn new(method: Arc<dyn Method>, k: usize, grid: GridSpec, threads: usize) -> Self {
        Self {
            method,
            k,
            grid,
            threads,
            spill_threshold: DEFAULT_SPILL_THRESHOLD,
            fault: None,
        }
    }
}

#[derive(Debug)]
pub struct AknncOutput {
    pub classifications: Vec<Classification>,
    pub knn: Vec<(u64, KnnList)>,
    pub timings: Vec<PhaseTiming>,
    pub merge_stats: Option<MergeStats>,
    pub work: WorkSummary,
    pub traces: Vec<JobTrace>,
}

impl AknncOutput {
    pub fn phase(&self, name: &str) -> Option<Duration> {
        self.timings
            .iter()
            .find(|t| t.phase == name)
            .map(|t| t.elapsed)
    }

    pub fn total_time(&self) -> Duration {
        self.timings.iter().map(|t| t.elapsed).sum()
    }
}

fn ensure_unique_ids<'a>(what: &str, ids: impl Iterator<Item = &'a Point>) -> Result<()> {
    let mut seen = HashSet::new();
    for p in ids {
        if !seen.insert(p.id) {
            return Err(Error::Config(format!("duplicate {what} point id {}", p.id)));
        }
    }
    Ok(())
}

/// Classifies every input point by its `k` nearest training points.
pub fn run_aknnc(input: &[Point], training: &TrainingSet, config: &PipelineConfig) -> Result<AknncOutput> {
    let k = config.k;
    let grid = &config.grid;
    if k == 0 {
        return Err(Error::Config("k must be at least 1".into()));
    }
    config.method.check_grid(grid)?;
    ensure_unique_ids("input", input.iter())?;
    ensure_unique_ids("training", training.points.iter())?;
    if (training.len() as u64) < k as u64 {
        return Err(Error::UnsatisfiableK {
            point_id: input.first().map_or(0, |p| p.id),
            k,
            available: training.len() as u64,
        });
    }

    let engine = Engine::with_spill_threshold(config.threads, config.spill_threshold)?;
    let counters = WorkCounters::default();
    let mut timings = Vec::new();

    let stats = job1_distribution(&engine, &training.points, grid, &mut timings)?;
    let partition = if config.method.merges() {
        timed(&mut timings, "merge", || config.method.partition(&stats, k, grid))?
    } else {
        config.method.partition(&stats, k, grid)?
    };
    let partition = partition.as_ref();

    let candidates = timed(&mut timings, "primitive", || {
        job2_primitive(&engine, input, &training.points, grid, partition, k, &counters)
    })?;
    let updated = timed(&mut timings, "update", || {
        job3_update(
            &engine,
            &candidates,
            &training.points,
            &stats,
            grid,
            partition,
            k,
            &counters,
            config.fault,
        )
    })?;
    drop(candidates);
    let knn = timed(&mut timings, "integrate", || job4_unify(&engine, &updated, k))?;
    drop(updated);
    let classifications = if config.fault.is_some() {
        // a faulty run may leave lists empty; classify what is there
        let nonempty: Vec<_> = knn.iter().filter(|(_, l)| !l.is_empty()).cloned().collect();
        timed(&mut timings, "classify", || job5_classify(&engine, &nonempty, k))?
    } else {
        timed(&mut timings, "classify", || job5_classify(&engine, &knn, k))?
    };

    Ok(AknncOutput {
        classifications,
        knn,
        timings,
        merge_stats: partition.merge_stats(),
        work: counters.summary(),
        traces: engine.take_traces(),
    })
}
