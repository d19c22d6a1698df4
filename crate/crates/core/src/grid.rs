//! Training-set distribution over the grid, and the quad-tree merging step
//! used by the baseline method.

use std::collections::{BTreeMap, HashMap};
use std::io::{BufRead, Write};
use std::path::Path;
use std::time::{Duration, Instant};

use crate::error::{Error, Result};
use crate::geometry::{
    cell_of_unchecked, for_each_contained_cell, max_dist_to_cell, window_cell_count, BoundaryShape, CellId, GridSpec,
};
use crate::point::Point;
use crate::runtime::{Engine, JobSpec};

/// Largest grid the merging step will materialise densely.
pub const MAX_MERGE_CELLS: u64 = 1 << 24;

/// Per-cell training point counts. Missing cells count zero.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CellStats {
    counts: HashMap<CellId, u64>,
    total: u64,
}

impl CellStats {
    pub fn from_counts(counts: impl IntoIterator<Item = (CellId, u64)>) -> Self {
        let mut map = HashMap::new();
        let mut total = 0;
        for (cell, n) in counts {
            if n > 0 {
                *map.entry(cell).or_insert(0) += n;
                total += n;
            }
        }
        Self { counts: map, total }
    }

    #[inline]
    pub fn get(&self, cell: CellId) -> u64 {
        self.counts.get(&cell).copied().unwrap_or(0)
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn occupied_cells(&self) -> usize {
        self.counts.len()
    }

    /// Occupied cells in no particular order.
    pub fn iter(&self) -> impl Iterator<Item = (CellId, u64)> + '_ {
        self.counts.iter().map(|(&c, &n)| (c, n))
    }

    /// The broadcast form: `(cell, count)` rows in cell order.
    pub fn sorted(&self) -> Vec<(CellId, u64)> {
        let mut rows: Vec<_> = self.counts.iter().map(|(&c, &n)| (c, n)).collect();
        rows.sort_unstable();
        rows
    }

    pub fn write_tsv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "# cell_id\tcount")?;
        for (cell, n) in self.sorted() {
            writeln!(w, "{cell}\t{n}")?;
        }
        Ok(())
    }

    pub fn read_tsv<R: BufRead>(r: R, path: &Path) -> Result<Self> {
        let mut rows = Vec::new();
        for (i, line) in r.lines().enumerate() {
            let line = line.map_err(|e| Error::io(path, e))?;
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let parse_err = |message: String| Error::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                message,
            };
            let (cell, n) = line
                .split_once('\t')
                .ok_or_else(|| parse_err("expected `cell_id<TAB>count`".into()))?;
            let cell = cell
                .parse()
                .map_err(|e| parse_err(format!("bad cell id `{cell}`: {e}")))?;
            let n = n
                .parse()
                .map_err(|e| parse_err(format!("bad count `{n}`: {e}")))?;
            rows.push((CellId(cell), n));
        }
        Ok(Self::from_counts(rows))
    }
}

/// Counts training points per cell as a map/reduce job.
pub fn compute_distribution(engine: &Engine, training: &[Point], grid: &GridSpec) -> Result<CellStats> {
    let job = JobSpec::new(
        "distribution",
        |p: &Point, out| {
            p.validate(grid)?;
            Ok(out.emit(&cell_of_unchecked(&p.coords, grid).0, &1u64)?)
        },
        |cell: &u64, ones: Vec<u64>, out: &mut Vec<(CellId, u64)>| {
            out.push((CellId(*cell), ones.iter().sum()));
            Ok(())
        },
    );
    let rows = engine.execute(&job, training)?;
    Ok(CellStats::from_counts(rows))
}

/// Certified lower bound on the training points within `shape`: the summed
/// counts of cells whose whole box lies inside the closed ball.
pub fn count_in_shape_lower_bound(shape: &BoundaryShape<'_>, stats: &CellStats, grid: &GridSpec) -> u64 {
    if (stats.occupied_cells() as f64) < window_cell_count(shape.radius, grid) {
        return stats
            .iter()
            .filter(|&(c, _)| max_dist_to_cell(shape.center, c, grid) <= shape.radius)
            .map(|(_, n)| n)
            .sum();
    }
    let home = cell_of_unchecked(shape.center, grid);
    let mut total = 0;
    for_each_contained_cell(shape, home, grid, |c| total += stats.get(c));
    total
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MergeStats {
    pub elapsed: Duration,
    pub merged_base_cells: u64,
    pub pct_of_total: f64,
    pub max_region_base_cells: u64,
}

impl MergeStats {
    pub const CSV_HEADER: &'static str = "elapsed_ms,merged_cells,pct,max_region";

    pub fn csv_row(&self) -> String {
        format!(
            "{:.3},{},{:.6},{}",
            self.elapsed.as_secs_f64() * 1e3,
            self.merged_base_cells,
            self.pct_of_total,
            self.max_region_base_cells
        )
    }
}

/// Base cells grouped into aligned quad-tree blocks. A region is named by
/// the id of its lowest-corner base cell.
#[derive(Debug, Clone)]
pub struct MergedGrid {
    grid: GridSpec,
    top: u32,
    /// `whole[level][block]`: the block is a single region at this level
    /// (possibly absorbed further up).
    whole: Vec<Vec<bool>>,
    /// `counts[level][block]`: training points in the block.
    counts: Vec<Vec<u64>>,
    region_of: Vec<u64>,
    region_level: BTreeMap<u64, u32>,
    region_count: BTreeMap<u64, u64>,
    stats: MergeStats,
}

/// Bottom-up 2^d-ary merge: a parent block absorbs all of its children as
/// soon as one child that is currently a single region holds fewer than `k`
/// training points.
pub fn merge_cells(stats: &CellStats, k: usize, grid: &GridSpec) -> Result<MergedGrid> {
    let started = Instant::now();
    let top = grid.granularity().ok_or_else(|| {
        Error::Config(format!(
            "merging needs a power-of-two number of cells per axis, got {}",
            grid.cells_per_axis()
        ))
    })?;
    if k == 0 {
        return Err(Error::Config("k must be at least 1".into()));
    }
    if grid.cell_count() > MAX_MERGE_CELLS {
        return Err(Error::Config(format!(
            "grid of {} cells is too large for the merging step (limit {MAX_MERGE_CELLS})",
            grid.cell_count()
        )));
    }
    let d = grid.dims();
    let k = k as u64;
    let base = grid.cell_count() as usize;

    let mut counts = vec![vec![0u64; base]];
    for (cell, n) in stats.sorted() {
        if let Some(slot) = counts[0].get_mut(cell.0 as usize) {
            *slot = n;
        }
    }
    let mut whole = vec![vec![true; base]];

    for level in 0..top {
        let side = grid.cells_per_axis() >> level;
        let parent_side = side / 2;
        let parents = (parent_side as usize).pow(d as u32);
        let mut parent_counts = vec![0u64; parents];
        let mut deficient = vec![false; parents];
        let child_counts = &counts[level as usize];
        let child_whole = &whole[level as usize];
        for (child, (&n, &is_whole)) in child_counts.iter().zip(child_whole).enumerate() {
            let parent = parent_block(child as u64, side, d) as usize;
            parent_counts[parent] += n;
            if is_whole && n < k {
                deficient[parent] = true;
            }
        }
        counts.push(parent_counts);
        whole.push(deficient);
    }

    let mut region_of = vec![0u64; base];
    let mut region_level = BTreeMap::new();
    let mut region_count = BTreeMap::new();
    let g = grid.cells_per_axis();
    for (cell, slot) in region_of.iter_mut().enumerate() {
        let axes = grid.axes(CellId(cell as u64));
        let (level, block) = (0..=top)
            .rev()
            .map(|l| (l, block_of(&axes, l, g >> l)))
            .find(|&(l, b)| whole[l as usize][b as usize])
            .expect("level 0 blocks are always whole");
        let anchor: Vec<u64> = axes.iter().map(|&c| (c >> level) << level).collect();
        let anchor = grid.linear(&anchor).0;
        *slot = anchor;
        region_level.entry(anchor).or_insert(level);
        region_count
            .entry(anchor)
            .or_insert(counts[level as usize][block as usize]);
    }

    let merged_base_cells: u64 = region_level
        .values()
        .filter(|&&l| l > 0)
        .map(|&l| 1u64 << (d as u32 * l))
        .sum();
    let max_level = region_level.values().copied().max().unwrap_or(0);
    let stats = MergeStats {
        elapsed: started.elapsed(),
        merged_base_cells,
        pct_of_total: merged_base_cells as f64 * 100.0 / grid.cell_count() as f64,
        max_region_base_cells: 1u64 << (d as u32 * max_level),
    };
    Ok(MergedGrid {
        grid: *grid,
        top,
        whole,
        counts,
        region_of,
        region_level,
        region_count,
        stats,
    })
}

fn block_of(axes: &[u64], level: u32, side: u64) -> u64 {
    axes.iter()
        .rev()
        .fold(0, |acc, &c| acc * side + (c >> level))
}

fn parent_block(child: u64, side: u64, d: usize) -> u64 {
    let parent_side = side / 2;
    let mut rest = child;
    let mut parent = 0;
    let mut stride = 1;
    for _ in 0..d {
        let c = rest % side;
        rest /= side;
        parent += (c / 2) * stride;
        stride *= parent_side;
    }
    parent
}

impl MergedGrid {
    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    #[inline]
    pub fn region_of(&self, cell: CellId) -> u64 {
        self.region_of[cell.0 as usize]
    }

    pub fn region_level(&self, region: u64) -> Option<u32> {
        self.region_level.get(&region).copied()
    }

    pub fn region_count(&self, region: u64) -> Option<u64> {
        self.region_count.get(&region).copied()
    }

    /// `(region, level, count)` in region order.
    pub fn regions(&self) -> impl Iterator<Item = (u64, u32, u64)> + '_ {
        self.region_level
            .iter()
            .map(|(&r, &l)| (r, l, self.region_count[&r]))
    }

    pub fn region_total(&self) -> usize {
        self.region_level.len()
    }

    pub fn stats(&self) -> &MergeStats {
        &self.stats
    }

    /// Regions other than `home` that hold training points and have a member
    /// cell whose box meets the open ball. Walks the block hierarchy from the
    /// root and prunes empty blocks and blocks the ball cannot reach.
    pub fn overlapped_regions(&self, shape: &BoundaryShape<'_>, home: u64) -> Vec<u64> {
        let mut out = Vec::new();
        if shape.radius > 0.0 {
            let d = self.grid.dims();
            self.descend(shape, home, self.top, &vec![0; d], &mut out);
        }
        out.sort_unstable();
        out
    }

    fn descend(&self, shape: &BoundaryShape<'_>, home: u64, level: u32, block: &[u64], out: &mut Vec<u64>) {
        let side = self.grid.cells_per_axis() >> level;
        let linear = block.iter().rev().fold(0, |acc, &b| acc * side + b);
        if self.counts[level as usize][linear as usize] == 0 {
            return;
        }
        let gap2: f64 = block
            .iter()
            .zip(shape.center)
            .map(|(&b, &x)| {
                let lo = self.grid.edge(b << level);
                let hi = self.grid.edge((b + 1) << level);
                let gap = if x < lo {
                    lo - x
                } else if x > hi {
                    x - hi
                } else {
                    0.0
                };
                gap * gap
            })
            .sum();
        if gap2.sqrt() >= shape.radius || gap2.is_nan() {
            return;
        }
        if self.whole[level as usize][linear as usize] {
            let anchor: Vec<u64> = block.iter().map(|&b| b << level).collect();
            let anchor = self.grid.linear(&anchor).0;
            if anchor != home {
                out.push(anchor);
            }
            return;
        }
        let d = block.len();
        let mut child = vec![0u64; d];
        for offsets in 0u32..(1 << d) {
            for (i, c) in child.iter_mut().enumerate() {
                *c = block[i] * 2 + u64::from((offsets >> i) & 1);
            }
            self.descend(shape, home, level - 1, &child, out);
        }
    }
}
