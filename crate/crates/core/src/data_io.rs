//! Text dataset formats, normalization and synthetic generators.
//!
//! Point files are TSV, one record per line: `id`, then `d` coordinates, then
//! (training only) the class label. Lines starting with `#` are comments.

use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::geometry::{cell_of_unchecked, GridSpec};
use crate::knn::{Classification, KnnList};
use crate::point::{ClassTable, Point, TrainingSet};

/// Per-axis `[min, max]` of the raw data, for min-max normalization.
#[derive(Debug, Clone, PartialEq)]
pub struct Bounds {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

impl Bounds {
    pub fn of<'a>(points: impl IntoIterator<Item = &'a [f64]>, d: usize) -> Option<Self> {
        let mut it = points.into_iter();
        let first = it.next()?;
        let mut b = Bounds {
            min: first.to_vec(),
            max: first.to_vec(),
        };
        for p in it {
            for ((lo, hi), &x) in b.min.iter_mut().zip(&mut b.max).zip(&p[..d]) {
                *lo = lo.min(x);
                *hi = hi.max(x);
            }
        }
        Some(b)
    }

    pub fn dims(&self) -> usize {
        self.min.len()
    }

    pub fn normalize(&self, coords: &mut [f64]) {
        for (i, x) in coords.iter_mut().enumerate() {
            let span = self.max[i] - self.min[i];
            *x = if span > 0.0 {
                (*x - self.min[i]) / span
            } else {
                0.0
            };
        }
    }

    pub fn read(path: &Path) -> Result<Self> {
        let mut min = Vec::new();
        let mut max = Vec::new();
        for_each_record(path, |line_no, fields| {
            let err = |message: String| Error::Parse {
                path: path.to_path_buf(),
                line: line_no,
                message,
            };
            if fields.len() != 3 {
                return Err(err("expected `axis<TAB>min<TAB>max`".into()));
            }
            let axis: usize = parse_field(fields[0], "axis").map_err(err)?;
            if axis != min.len() {
                return Err(err(format!("expected axis {}, found {axis}", min.len())));
            }
            let lo: f64 = parse_field(fields[1], "min").map_err(err)?;
            let hi: f64 = parse_field(fields[2], "max").map_err(err)?;
            if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                return Err(err(format!("invalid bounds [{lo}, {hi}]")));
            }
            min.push(lo);
            max.push(hi);
            Ok(())
        })?;
        Ok(Self { min, max })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_file(path, |w| {
            writeln!(w, "# axis\tmin\tmax")?;
            for (i, (lo, hi)) in self.min.iter().zip(&self.max).enumerate() {
                writeln!(w, "{i}\t{lo}\t{hi}")?;
            }
            Ok(())
        })
    }
}

/// `name.bounds.tsv` next to `name.train.tsv` or `name.input.tsv`, if present.
pub fn sidecar_bounds(path: &Path) -> Option<PathBuf> {
    let file = path.file_name()?.to_str()?;
    let stem = file
        .strip_suffix(".train.tsv")
        .or_else(|| file.strip_suffix(".input.tsv"))?;
    let candidate = path.with_file_name(format!("{stem}.bounds.tsv"));
    candidate.is_file().then_some(candidate)
}

fn parse_field<T: FromStr>(s: &str, what: &str) -> std::result::Result<T, String>
where
    T::Err: std::fmt::Display,
{
    s.trim()
        .parse()
        .map_err(|e| format!("bad {what} `{s}`: {e}"))
}

fn for_each_record(path: &Path, mut f: impl FnMut(usize, Vec<&str>) -> Result<()>) -> Result<()> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let trimmed = line.trim_end_matches(['\r', '\n']);
        if trimmed.trim().is_empty() || trimmed.starts_with('#') {
            continue;
        }
        f(i + 1, trimmed.split('\t').collect())?;
    }
    Ok(())
}

fn write_file(path: &Path, f: impl FnOnce(&mut BufWriter<File>) -> std::io::Result<()>) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    f(&mut w)
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(path, e))
}

fn parse_points(path: &Path, d: usize, labeled: bool, bounds: Option<&Bounds>) -> Result<Vec<(Point, Option<String>)>> {
    if let Some(b) = bounds {
        if b.dims() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                actual: b.dims(),
            });
        }
    }
    let expected = 1 + d + usize::from(labeled);
    let mut out = Vec::new();
    for_each_record(path, |line, fields| {
        let err = |message: String| Error::Parse {
            path: path.to_path_buf(),
            line,
            message,
        };
        if fields.len() != expected {
            return Err(err(format!(
                "dimension mismatch: expected {d} coordinates{}, found {} fields",
                if labeled { " and a class" } else { "" },
                fields.len()
            )));
        }
        let id: u64 = parse_field(fields[0], "point id").map_err(err)?;
        let mut coords = Vec::with_capacity(d);
        for (axis, f) in fields[1..=d].iter().enumerate() {
            let x: f64 = parse_field(f, "coordinate").map_err(err)?;
            if !x.is_finite() {
                return Err(err(format!("non-finite coordinate `{f}` on axis {axis}")));
            }
            coords.push(x);
        }
        if let Some(b) = bounds {
            b.normalize(&mut coords);
        }
        if let Some((axis, x)) = coords
            .iter()
            .enumerate()
            .find(|(_, x)| !(0.0..=1.0).contains(*x))
        {
            return Err(err(format!(
                "coordinate {x} on axis {axis} is outside [0, 1]; supply a bounds file to normalize"
            )));
        }
        let class = labeled.then(|| fields[d + 1].trim().to_string());
        if matches!(&class, Some(c) if c.is_empty()) {
            return Err(err("empty class label".into()));
        }
        out.push((Point::unlabeled(id, coords), class));
        Ok(())
    })?;
    Ok(out)
}

pub fn parse_training(path: &Path, d: usize, bounds: Option<&Bounds>) -> Result<TrainingSet> {
    let rows = parse_points(path, d, true, bounds)?;
    let classes = ClassTable::new(rows.iter().filter_map(|(_, c)| c.clone()));
    let points = rows
        .into_iter()
        .map(|(mut p, c)| {
            p.class = Some(classes.require(c.as_deref().unwrap_or_default())?);
            Ok(p)
        })
        .collect::<Result<_>>()?;
    Ok(TrainingSet { points, classes })
}

pub fn parse_input(path: &Path, d: usize, bounds: Option<&Bounds>) -> Result<Vec<Point>> {
    Ok(parse_points(path, d, false, bounds)?
        .into_iter()
        .map(|(p, _)| p)
        .collect())
}

fn write_coords(line: &mut String, coords: &[f64]) {
    for x in coords {
        let _ = write!(line, "\t{x}");
    }
}

pub fn write_training(training: &TrainingSet, path: &Path) -> Result<()> {
    write_file(path, |w| {
        writeln!(w, "# point_id\tcoordinates...\tclass")?;
        let mut line = String::new();
        for p in &training.points {
            line.clear();
            let _ = write!(line, "{}", p.id);
            write_coords(&mut line, &p.coords);
            let label = p.class.map_or("", |c| training.classes.label(c));
            writeln!(w, "{line}\t{label}")?;
        }
        Ok(())
    })
}

pub fn write_input(points: &[Point], path: &Path) -> Result<()> {
    write_file(path, |w| {
        writeln!(w, "# point_id\tcoordinates...")?;
        let mut line = String::new();
        for p in points {
            line.clear();
            let _ = write!(line, "{}", p.id);
            write_coords(&mut line, &p.coords);
            writeln!(w, "{line}")?;
        }
        Ok(())
    })
}

pub fn write_classifications(rows: &[Classification], classes: &ClassTable, path: &Path) -> Result<()> {
    write_file(path, |w| {
        writeln!(w, "# point_id\tclass")?;
        for c in rows {
            writeln!(w, "{}\t{}", c.point_id, classes.label(c.class))?;
        }
        Ok(())
    })
}

/// `(point_id, label)` rows.
pub fn parse_classifications(path: &Path) -> Result<Vec<(u64, String)>> {
    let mut out = Vec::new();
    for_each_record(path, |line, fields| {
        let err = |message: String| Error::Parse {
            path: path.to_path_buf(),
            line,
            message,
        };
        if fields.len() != 2 {
            return Err(err("expected `point_id<TAB>class`".into()));
        }
        let id = parse_field(fields[0], "point id").map_err(err)?;
        out.push((id, fields[1].trim().to_string()));
        Ok(())
    })?;
    Ok(out)
}

/// Formats with nine significant digits.
pub fn format_sig9(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return format!("{x}");
    }
    let magnitude = x.abs().log10().floor() as i32;
    if (-5..9).contains(&magnitude) {
        let decimals = (8 - magnitude).max(0) as usize;
        format!("{x:.decimals$}")
    } else {
        format!("{x:.8e}")
    }
}

pub fn write_knn_lists(lists: &[(u64, KnnList)], classes: &ClassTable, path: &Path) -> Result<()> {
    write_file(path, |w| {
        writeln!(w, "# point_id\tneighbor,distance,class:...")?;
        let mut line = String::new();
        for (id, list) in lists {
            line.clear();
            for (i, e) in list.entries().iter().enumerate() {
                if i > 0 {
                    line.push(':');
                }
                let _ = write!(
                    line,
                    "{},{},{}",
                    e.neighbor_id,
                    format_sig9(e.distance),
                    classes.label(e.class)
                );
            }
            writeln!(w, "{id}\t{line}")?;
        }
        Ok(())
    })
}

pub type KnnRow = (u64, Vec<(u64, f64, String)>);

pub fn parse_knn_lists(path: &Path) -> Result<Vec<KnnRow>> {
    let mut out = Vec::new();
    for_each_record(path, |line, fields| {
        let err = |message: String| Error::Parse {
            path: path.to_path_buf(),
            line,
            message,
        };
        if fields.len() != 2 {
            return Err(err("expected `point_id<TAB>list`".into()));
        }
        let id = parse_field(fields[0], "point id").map_err(err)?;
        let mut entries = Vec::new();
        if !fields[1].is_empty() {
            for item in fields[1].split(':') {
                let parts: Vec<&str> = item.split(',').collect();
                if parts.len() != 3 {
                    return Err(err(format!("bad entry `{item}`")));
                }
                entries.push((
                    parse_field(parts[0], "neighbor id").map_err(err)?,
                    parse_field(parts[1], "distance").map_err(err)?,
                    parts[2].to_string(),
                ));
            }
        }
        out.push((id, entries));
        Ok(())
    })?;
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Distribution {
    Uniform,
    /// Each coordinate is `u^alpha` for `u` uniform on `[0, 1)`.
    PowerLaw { alpha: f64 },
}

impl Distribution {
    pub fn name(&self) -> &'static str {
        match self {
            Distribution::Uniform => "uniform",
            Distribution::PowerLaw { .. } => "power-law",
        }
    }

    pub fn parse(kind: &str, alpha: f64) -> Result<Self> {
        match kind {
            "uniform" => Ok(Distribution::Uniform),
            "power-law" | "powerlaw" => Ok(Distribution::PowerLaw { alpha }),
            other => Err(Error::Config(format!(
                "unknown distribution `{other}` (expected uniform or power-law)"
            ))),
        }
    }

    fn sample(&self, rng: &mut impl Rng) -> f64 {
        let u: f64 = rng.random();
        match *self {
            Distribution::Uniform => u,
            Distribution::PowerLaw { alpha } => u.powf(alpha),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSpec {
    pub distribution: Distribution,
    pub d: usize,
    pub count: usize,
    pub seed: u64,
    pub classes: usize,
    /// Coarse per-axis resolution of the label rule.
    pub class_grid: u64,
    /// Share of the points drawn as the training set.
    pub train_fraction: f64,
}

impl DatasetSpec {
    pub const DEFAULT_ALPHA: f64 = 4.0;
    pub const DEFAULT_TRAIN_FRACTION: f64 = 0.1;

    /// Uniform data, 5 classes, smallest class grid that fits them.
    pub fn new(distribution: Distribution, d: usize, count: usize, seed: u64) -> Self {
        Self {
            distribution,
            d,
            count,
            seed,
            classes: 5,
            class_grid: default_class_grid(d, 5),
            train_fraction: Self::DEFAULT_TRAIN_FRACTION,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.d == 0 {
            return Err(Error::Config("dimension must be at least 1".into()));
        }
        if let Distribution::PowerLaw { alpha } = self.distribution {
            if !(alpha.is_finite() && alpha > 0.0) {
                return Err(Error::Config(format!("power-law alpha must be > 0, got {alpha}")));
            }
        }
        if !(self.train_fraction > 0.0 && self.train_fraction <= 1.0) {
            return Err(Error::Config(format!(
                "training fraction must be in (0, 1], got {}",
                self.train_fraction
            )));
        }
        let coarse = GridSpec::new(self.d, self.class_grid)?;
        if self.classes == 0 || self.classes as u64 > coarse.cell_count() {
            return Err(Error::Config(format!(
                "need 1 <= classes <= class_grid^d = {}, got {}",
                coarse.cell_count(),
                self.classes
            )));
        }
        Ok(())
    }
}

/// Smallest per-axis resolution whose `c^d` cells can hold `classes` labels.
pub fn default_class_grid(d: usize, classes: usize) -> u64 {
    let mut c = 1u64;
    while (c as f64).powi(d as i32) < classes as f64 {
        c += 1;
    }
    c
}

/// Ground-truth labeling: linear coarse cell index modulo the class count.
#[derive(Debug, Clone)]
pub struct LabelRule {
    coarse: GridSpec,
    classes: usize,
}

impl LabelRule {
    pub fn new(d: usize, class_grid: u64, classes: usize) -> Result<Self> {
        Ok(Self {
            coarse: GridSpec::new(d, class_grid)?,
            classes,
        })
    }

    pub fn class_index(&self, coords: &[f64]) -> usize {
        (cell_of_unchecked(coords, &self.coarse).0 % self.classes as u64) as usize
    }
}

#[derive(Debug, Clone)]
pub struct GeneratedData {
    pub input: Vec<Point>,
    pub training: TrainingSet,
    /// Label-rule classes of the input points.
    pub truth: Vec<Classification>,
}

/// Seeded synthetic dataset: `count` points with ids `0..count`, a
/// `train_fraction` sample of them labeled as training, the rest as input.
pub fn generate(spec: &DatasetSpec) -> Result<GeneratedData> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let coords: Vec<Vec<f64>> = (0..spec.count)
        .map(|_| (0..spec.d).map(|_| spec.distribution.sample(&mut rng)).collect())
        .collect();

    let n_train = ((spec.count as f64) * spec.train_fraction).round() as usize;
    let mut sample_rng = ChaCha8Rng::seed_from_u64(spec.seed);
    sample_rng.set_stream(1);
    let mut is_train = vec![false; spec.count];
    for i in index::sample(&mut sample_rng, spec.count, n_train.min(spec.count)) {
        is_train[i] = true;
    }

    let classes = ClassTable::lettered(spec.classes);
    let class_ids: Vec<_> = (0..spec.classes)
        .map(|i| classes.id(&crate::point::index_label(i)).expect("lettered label"))
        .collect();
    let rule = LabelRule::new(spec.d, spec.class_grid, spec.classes)?;

    let mut input = Vec::with_capacity(spec.count - n_train);
    let mut truth = Vec::with_capacity(spec.count - n_train);
    let mut training = Vec::with_capacity(n_train);
    for (i, c) in coords.into_iter().enumerate() {
        let class = class_ids[rule.class_index(&c)];
        let id = i as u64;
        if is_train[i] {
            training.push(Point::labeled(id, c, class));
        } else {
            truth.push(Classification { point_id: id, class });
            input.push(Point::unlabeled(id, c));
        }
    }
    Ok(GeneratedData {
        input,
        training: TrainingSet {
            points: training,
            classes,
        },
        truth,
    })
}

/// Seeded sample of `round(fraction * n)` points, original order kept.
pub fn sample_fraction(points: &[Point], fraction: f64, seed: u64) -> Result<Vec<Point>> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::Config(format!("fraction must be in (0, 1], got {fraction}")));
    }
    if fraction == 1.0 {
        return Ok(points.to_vec());
    }
    let m = ((points.len() as f64) * fraction).round() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked = index::sample(&mut rng, points.len(), m.min(points.len())).into_vec();
    picked.sort_unstable();
    Ok(picked.into_iter().map(|i| points[i].clone()).collect())
}
