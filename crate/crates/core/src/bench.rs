//! Parameter sweeps over generated datasets, reported as CSV.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::time::Duration;

use crate::data_io::{generate, sample_fraction, DatasetSpec, Distribution, GeneratedData};
use crate::error::{Error, Result};
use crate::geometry::GridSpec;
use crate::method::MethodRegistry;
use crate::pipeline::{run_aknnc, AknncOutput, PipelineConfig, WorkSummary, PHASES};
use crate::point::TrainingSet;

#[derive(Debug, Clone)]
pub struct BenchSpec {
    pub methods: Vec<String>,
    pub distributions: Vec<Distribution>,
    pub dims: Vec<usize>,
    /// Cells per axis.
    pub grids: Vec<u64>,
    pub ks: Vec<usize>,
    pub fractions: Vec<f64>,
    pub threads: Vec<usize>,
    /// Points generated per dataset before the training split.
    pub count: usize,
    pub train_fraction: f64,
    pub classes: usize,
    pub seed: u64,
    /// Runs per configuration; each phase reports its fastest run.
    pub repeats: usize,
}

impl BenchSpec {
    pub fn validate(&self) -> Result<()> {
        let empty = [
            ("methods", self.methods.is_empty()),
            ("distributions", self.distributions.is_empty()),
            ("dims", self.dims.is_empty()),
            ("grids", self.grids.is_empty()),
            ("ks", self.ks.is_empty()),
            ("fractions", self.fractions.is_empty()),
            ("threads", self.threads.is_empty()),
        ];
        if let Some((name, _)) = empty.iter().find(|e| e.1) {
            return Err(Error::Config(format!("bench sweep needs at least one value for {name}")));
        }
        if self.repeats == 0 {
            return Err(Error::Config("repeats must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchRow {
    pub method: String,
    pub distribution: String,
    pub alpha: Option<f64>,
    pub d: usize,
    pub grid: GridSpec,
    pub k: usize,
    pub fraction: f64,
    pub threads: usize,
    pub input_points: usize,
    pub training_points: usize,
    /// Indexed like [`PHASES`]; `None` when the method has no such phase.
    pub phases: [Option<Duration>; PHASES.len()],
    pub total: Duration,
    pub work: WorkSummary,
    pub merged_pct: Option<f64>,
}

impl BenchRow {
    pub fn csv_header() -> String {
        let mut h = String::from(
            "method,distribution,alpha,d,n,cells_per_axis,k,fraction,threads,input_points,training_points",
        );
        for p in PHASES {
            let _ = write!(h, ",{p}_ms");
        }
        h.push_str(",total_ms,distance_computations,overlap_copies,growth_steps,complete_after_primitive,merged_pct");
        h
    }

    pub fn csv_row(&self) -> String {
        let mut s = format!(
            "{},{},{},{},{},{},{},{},{},{},{}",
            self.method,
            self.distribution,
            self.alpha.map(|a| a.to_string()).unwrap_or_default(),
            self.d,
            log2_column(&self.grid),
            self.grid.cells_per_axis(),
            self.k,
            self.fraction,
            self.threads,
            self.input_points,
            self.training_points
        );
        for p in &self.phases {
            s.push(',');
            if let Some(t) = p {
                let _ = write!(s, "{:.3}", ms(*t));
            }
        }
        let _ = write!(
            s,
            ",{:.3},{},{},{},{},{}",
            ms(self.total),
            self.work.distance_computations,
            self.work.overlap_copies,
            self.work.growth_steps,
            self.work.complete_after_primitive,
            self.merged_pct.map(|p| format!("{p:.4}")).unwrap_or_default()
        );
        s
    }

    pub fn phase(&self, name: &str) -> Option<Duration> {
        PHASES.iter().position(|p| *p == name).and_then(|i| self.phases[i])
    }
}

fn ms(d: Duration) -> f64 {
    d.as_secs_f64() * 1e3
}

/// `log2` of the cells per axis, blank when that is not a power of two.
pub fn log2_column(grid: &GridSpec) -> String {
    grid.granularity().map(|n| n.to_string()).unwrap_or_default()
}

/// `phase,method,k,n,d,elapsed_ms` rows for one run.
pub fn timings_csv(output: &AknncOutput, method: &str, k: usize, grid: &GridSpec) -> String {
    let mut s = String::from("phase,method,k,n,d,elapsed_ms\n");
    let n = log2_column(grid);
    for t in &output.timings {
        let _ = writeln!(s, "{},{method},{k},{n},{},{:.3}", t.phase, grid.dims(), ms(t.elapsed));
    }
    let _ = writeln!(s, "total,{method},{k},{n},{},{:.3}", grid.dims(), ms(output.total_time()));
    s
}

/// Runs every combination of the sweep, calling `on_row` as rows complete.
/// Combinations kdann cannot run (odd grids) are skipped.
pub fn run_bench(spec: &BenchSpec, registry: &MethodRegistry, mut on_row: impl FnMut(&BenchRow)) -> Result<Vec<BenchRow>> {
    spec.validate()?;
    let methods = spec
        .methods
        .iter()
        .map(|m| registry.get(m))
        .collect::<Result<Vec<_>>>()?;
    let mut datasets: HashMap<(usize, usize), GeneratedData> = HashMap::new();
    let mut rows = Vec::new();

    for (di, distribution) in spec.distributions.iter().enumerate() {
        for &d in &spec.dims {
            let data = match datasets.entry((di, d)) {
                std::collections::hash_map::Entry::Occupied(e) => e.into_mut(),
                std::collections::hash_map::Entry::Vacant(e) => {
                    let mut ds = DatasetSpec::new(*distribution, d, spec.count, spec.seed);
                    ds.classes = spec.classes;
                    ds.class_grid = crate::data_io::default_class_grid(d, spec.classes);
                    ds.train_fraction = spec.train_fraction;
                    e.insert(generate(&ds)?)
                }
            };
            for &fraction in &spec.fractions {
                let input = sample_fraction(&data.input, fraction, spec.seed)?;
                let training = TrainingSet {
                    points: sample_fraction(&data.training.points, fraction, spec.seed.wrapping_add(1))?,
                    classes: data.training.classes.clone(),
                };
                for &g in &spec.grids {
                    let grid = GridSpec::new(d, g)?;
                    for method in &methods {
                        if method.check_grid(&grid).is_err() {
                            log::warn!("skipping {} with {g} cells per axis", method.name());
                            continue;
                        }
                        for &k in &spec.ks {
                            for &threads in &spec.threads {
                                let config = PipelineConfig::new(method.clone(), k, grid, threads);
                                let mut best: Option<BenchRow> = None;
                                for _ in 0..spec.repeats {
                                    let out = run_aknnc(&input, &training, &config)?;
                                    let row = BenchRow {
                                        method: method.name().to_string(),
                                        distribution: distribution.name().to_string(),
                                        alpha: match distribution {
                                            Distribution::PowerLaw { alpha } => Some(*alpha),
                                            Distribution::Uniform => None,
                                        },
                                        d,
                                        grid,
                                        k,
                                        fraction,
                                        threads,
                                        input_points: input.len(),
                                        training_points: training.len(),
                                        phases: PHASES.map(|p| out.phase(p)),
                                        total: out.total_time(),
                                        work: out.work,
                                        merged_pct: out.merge_stats.map(|m| m.pct_of_total),
                                    };
                                    best = Some(match best {
                                        None => row,
                                        Some(mut b) => {
                                            for (bp, rp) in b.phases.iter_mut().zip(row.phases) {
                                                *bp = match (*bp, rp) {
                                                    (Some(x), Some(y)) => Some(x.min(y)),
                                                    (x, y) => x.or(y),
                                                };
                                            }
                                            b.total = b.total.min(row.total);
                                            b
                                        }
                                    });
                                }
                                let row = best.expect("repeats >= 1");
                                on_row(&row);
                                rows.push(row);
                            }
                        }
                    }
                }
            }
        }
    }
    Ok(rows)
}
