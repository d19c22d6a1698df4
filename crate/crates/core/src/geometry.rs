//! Geometric kernel over the unit target space `[0, 1]^d`.
//!
//! The space is split into `g` equal intervals per axis, giving `g^d` cells.
//! Cells are addressed by a linear index with axis 0 least significant.
//! Only the Euclidean metric is provided; another metric would need its own
//! point distance plus matching box lower/upper bounds.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Prune slack for squared partial sums. Pruning never decides membership,
/// it only skips subtrees that are clearly out of reach.
const PRUNE_SLACK: f64 = 1.0 + 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct CellId(pub u64);

impl std::fmt::Display for CellId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        self.0.fmt(f)
    }
}

/// Equal-sized decomposition of the unit space: `d` axes, `g` cells per axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GridSpec {
    d: usize,
    g: u64,
    total: u64,
}

impl GridSpec {
    pub fn new(d: usize, g: u64) -> Result<Self> {
        if d == 0 {
            return Err(Error::Config("dimension must be at least 1".into()));
        }
        if g == 0 {
            return Err(Error::Config("cells per axis must be at least 1".into()));
        }
        let total = u32::try_from(d)
            .ok()
            .and_then(|d| g.checked_pow(d))
            .ok_or_else(|| {
                Error::Config(format!("{g}^{d} cells do not fit in a 64-bit cell id"))
            })?;
        Ok(Self { d, g, total })
    }

    /// Grid with `2^n` cells per axis.
    pub fn with_granularity(d: usize, n: u32) -> Result<Self> {
        let g = 1u64
            .checked_shl(n)
            .filter(|_| n < 64)
            .ok_or_else(|| Error::Config(format!("granularity n = {n} is too large")))?;
        Self::new(d, g)
    }

    pub fn dims(&self) -> usize {
        self.d
    }

    pub fn cells_per_axis(&self) -> u64 {
        self.g
    }

    pub fn cell_count(&self) -> u64 {
        self.total
    }

    pub fn cell_width(&self) -> f64 {
        1.0 / self.g as f64
    }

    pub fn is_power_of_two(&self) -> bool {
        self.g.is_power_of_two()
    }

    /// `log2(g)` when `g` is a power of two.
    pub fn granularity(&self) -> Option<u32> {
        self.is_power_of_two().then(|| self.g.trailing_zeros())
    }

    pub fn linear(&self, axes: &[u64]) -> CellId {
        debug_assert_eq!(axes.len(), self.d);
        let mut id = 0u64;
        for &c in axes.iter().rev() {
            debug_assert!(c < self.g);
            id = id * self.g + c;
        }
        CellId(id)
    }

    pub fn axes(&self, cell: CellId) -> Vec<u64> {
        let mut rest = cell.0;
        (0..self.d)
            .map(|_| {
                let c = rest % self.g;
                rest /= self.g;
                c
            })
            .collect()
    }

    pub fn contains_cell(&self, cell: CellId) -> bool {
        cell.0 < self.total
    }

    /// Lower edge of interval `c` on any axis.
    #[inline]
    pub(crate) fn edge(&self, c: u64) -> f64 {
        c as f64 / self.g as f64
    }

    /// Interval index of a coordinate on one axis, consistent with [`Self::edge`]:
    /// `edge(c) <= x < edge(c + 1)`, except that `x = 1.0` lands in the last interval.
    #[inline]
    pub(crate) fn axis_index(&self, x: f64) -> u64 {
        let g = self.g;
        let mut c = ((x * g as f64).floor() as u64).min(g - 1);
        if c > 0 && x < self.edge(c) {
            c -= 1;
        } else if c + 1 < g && x >= self.edge(c + 1) {
            c += 1;
        }
        c
    }
}

/// Search ball centred at a query point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundaryShape<'a> {
    pub center: &'a [f64],
    pub radius: f64,
}

impl<'a> BoundaryShape<'a> {
    pub fn new(center: &'a [f64], radius: f64) -> Self {
        debug_assert!(radius >= 0.0);
        Self { center, radius }
    }
}

pub fn euclidean_distance(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            actual: b.len(),
        });
    }
    Ok(distance(a, b))
}

/// Unchecked Euclidean distance. Every distance that ends up in a neighbor
/// list goes through this function so that ties compare bit-for-bit.
#[inline]
pub fn distance(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Validates a coordinate vector against the grid and returns its cell.
pub fn cell_of(p: &[f64], grid: &GridSpec) -> Result<CellId> {
    check_point(u64::MAX, p, grid)?;
    Ok(cell_of_unchecked(p, grid))
}

pub(crate) fn check_point(id: u64, p: &[f64], grid: &GridSpec) -> Result<()> {
    if p.len() != grid.d {
        return Err(Error::DimensionMismatch {
            expected: grid.d,
            actual: p.len(),
        });
    }
    if let Some((axis, &value)) = p
        .iter()
        .enumerate()
        .find(|(_, x)| !(x.is_finite() && (0.0..=1.0).contains(*x)))
    {
        return Err(Error::OutOfSpace { id, axis, value });
    }
    Ok(())
}

#[inline]
pub(crate) fn cell_of_unchecked(p: &[f64], grid: &GridSpec) -> CellId {
    let mut id = 0u64;
    for &x in p.iter().rev() {
        id = id * grid.g + grid.axis_index(x);
    }
    CellId(id)
}

#[inline]
fn axis_gap(x: f64, c: u64, grid: &GridSpec) -> f64 {
    let lo = grid.edge(c);
    let hi = grid.edge(c + 1);
    if x < lo {
        lo - x
    } else if x > hi {
        x - hi
    } else {
        0.0
    }
}

#[inline]
fn axis_reach(x: f64, c: u64, grid: &GridSpec) -> f64 {
    let lo = grid.edge(c);
    let hi = grid.edge(c + 1);
    (x - lo).abs().max((hi - x).abs())
}

pub fn min_dist_to_cell(center: &[f64], cell: CellId, grid: &GridSpec) -> f64 {
    let axes = grid.axes(cell);
    center
        .iter()
        .zip(&axes)
        .map(|(&x, &c)| {
            let gap = axis_gap(x, c, grid);
            gap * gap
        })
        .sum::<f64>()
        .sqrt()
}

pub fn max_dist_to_cell(center: &[f64], cell: CellId, grid: &GridSpec) -> f64 {
    let axes = grid.axes(cell);
    center
        .iter()
        .zip(&axes)
        .map(|(&x, &c)| {
            let reach = axis_reach(x, c, grid);
            reach * reach
        })
        .sum::<f64>()
        .sqrt()
}

/// Cells other than `home` whose closed box meets the open ball of `shape`,
/// in ascending id order.
pub fn overlapped_cells(shape: &BoundaryShape<'_>, home: CellId, grid: &GridSpec) -> Vec<CellId> {
    let mut out = Vec::new();
    let r = shape.radius;
    if r <= 0.0 {
        return out;
    }
    let window = Window::around(home, r, grid);
    window.visit(shape.center, grid, axis_gap, r * r, &mut |cell, per_axis| {
        if cell != home && sum_sqrt(per_axis) < r {
            out.push(cell);
        }
    });
    out.sort_unstable();
    out
}

/// Calls `f` for every cell whose box lies entirely inside the closed ball.
pub(crate) fn for_each_contained_cell(
    shape: &BoundaryShape<'_>,
    home: CellId,
    grid: &GridSpec,
    mut f: impl FnMut(CellId),
) {
    let r = shape.radius;
    if r <= 0.0 {
        return;
    }
    let window = Window::around(home, r, grid);
    window.visit(shape.center, grid, axis_reach, r * r, &mut |cell, per_axis| {
        if sum_sqrt(per_axis) <= r {
            f(cell);
        }
    });
}

#[inline]
fn sum_sqrt(per_axis: &[f64]) -> f64 {
    per_axis.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Number of cells in the index window searched for `radius`.
pub(crate) fn window_cell_count(radius: f64, grid: &GridSpec) -> f64 {
    let side = (2.0 * (radius * grid.g as f64).ceil() + 1.0).min(grid.g as f64);
    side.powi(grid.d as i32)
}

/// Axis-aligned index window of `±ceil(r / width)` cells around a home cell.
struct Window {
    lo: Vec<u64>,
    hi: Vec<u64>,
}

impl Window {
    fn around(home: CellId, radius: f64, grid: &GridSpec) -> Self {
        let reach = (radius * grid.g as f64).ceil();
        let reach = if reach >= grid.g as f64 {
            grid.g
        } else {
            reach as u64
        };
        let axes = grid.axes(home);
        let lo = axes.iter().map(|&c| c.saturating_sub(reach)).collect();
        let hi = axes
            .iter()
            .map(|&c| c.saturating_add(reach).min(grid.g - 1))
            .collect();
        Self { lo, hi }
    }

    /// Odometer over the window. `measure` gives a per-axis extent whose squared
    /// sum is pruned against `limit2`; the visitor sees the per-axis extents in
    /// axis order so it can apply the exact test itself.
    fn visit(
        &self,
        center: &[f64],
        grid: &GridSpec,
        measure: fn(f64, u64, &GridSpec) -> f64,
        limit2: f64,
        f: &mut dyn FnMut(CellId, &[f64]),
    ) {
        let d = grid.d;
        let tables: Vec<Vec<f64>> = (0..d)
            .map(|i| {
                (self.lo[i]..=self.hi[i])
                    .map(|c| measure(center[i], c, grid))
                    .collect()
            })
            .collect();
        let mut extents = vec![0.0; d];
        let bound = limit2 * PRUNE_SLACK;
        self.recurse(d, 0, 0.0, grid, &tables, bound, &mut extents, f);
    }

    #[allow(clippy::too_many_arguments)]
    fn recurse(
        &self,
        axis_plus_one: usize,
        prefix: u64,
        partial: f64,
        grid: &GridSpec,
        tables: &[Vec<f64>],
        bound: f64,
        extents: &mut [f64],
        f: &mut dyn FnMut(CellId, &[f64]),
    ) {
        if axis_plus_one == 0 {
            f(CellId(prefix), extents);
            return;
        }
        let axis = axis_plus_one - 1;
        for (offset, &e) in tables[axis].iter().enumerate() {
            let acc = partial + e * e;
            if acc > bound {
                continue;
            }
            extents[axis] = e;
            let c = self.lo[axis] + offset as u64;
            self.recurse(
                axis,
                prefix * grid.g + c,
                acc,
                grid,
                tables,
                bound,
                extents,
                f,
            );
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() <= 1e-12
    }

    fn grid(d: usize, g: u64) -> GridSpec {
        GridSpec::new(d, g).unwrap()
    }

    #[test]
    fn distance_examples() {
        assert!(close(euclidean_distance(&[0.0, 0.0], &[0.3, 0.4]).unwrap(), 0.5));
        let x = [0.1, 0.7, 0.3, 0.9];
        assert_eq!(euclidean_distance(&x, &x).unwrap(), 0.0);
        assert!(close(euclidean_distance(&[0.2], &[0.9]).unwrap(), 0.7));
        assert!(matches!(
            euclidean_distance(&[0.1, 0.2], &[0.3]),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn cell_of_examples() {
        let g = grid(2, 4);
        let c = cell_of(&[0.1, 0.6], &g).unwrap();
        assert_eq!(g.axes(c), vec![0, 2]);
        assert_eq!(c, CellId(8));
        let c = cell_of(&[1.0, 1.0], &g).unwrap();
        assert_eq!(g.axes(c), vec![3, 3]);
        assert_eq!(c, CellId(15));
        let g3 = grid(3, 2);
        let c = cell_of(&[0.6, 0.2, 0.9], &g3).unwrap();
        assert_eq!(g3.axes(c), vec![1, 0, 1]);
        assert_eq!(c, CellId(5));
    }

    #[test]
    fn cell_of_rejects_outside_points() {
        let g = grid(2, 4);
        assert!(matches!(
            cell_of(&[1.2, 0.5], &g),
            Err(Error::OutOfSpace { axis: 0, .. })
        ));
        assert!(matches!(
            cell_of(&[0.5, -0.01], &g),
            Err(Error::OutOfSpace { axis: 1, .. })
        ));
        assert!(matches!(
            cell_of(&[0.5, f64::NAN], &g),
            Err(Error::OutOfSpace { .. })
        ));
        assert!(matches!(
            cell_of(&[0.5], &g),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn grid_rejects_overflowing_cell_counts() {
        assert!(GridSpec::new(4, (1 << 16) - 1).is_ok());
        assert!(GridSpec::new(4, 1 << 16).is_err());
        assert!(GridSpec::new(0, 4).is_err());
        assert!(GridSpec::new(2, 0).is_err());
        assert_eq!(GridSpec::with_granularity(2, 3).unwrap().cells_per_axis(), 8);
    }

    #[test]
    fn min_dist_examples() {
        let g = grid(2, 4);
        let p = [0.3, 0.3];
        assert_eq!(min_dist_to_cell(&p, cell_of(&p, &g).unwrap(), &g), 0.0);
        assert!(close(min_dist_to_cell(&[0.1], CellId(2), &grid(1, 4)), 0.4));
        let g = grid(2, 2);
        let d = min_dist_to_cell(&[0.25, 0.25], g.linear(&[1, 1]), &g);
        assert!(close(d, 2f64.sqrt() * 0.25));
    }

    #[test]
    fn max_dist_examples() {
        assert!(close(max_dist_to_cell(&[0.0], CellId(0), &grid(1, 2)), 0.5));
        assert!(close(
            max_dist_to_cell(&[0.0, 0.0], CellId(0), &grid(2, 1)),
            2f64.sqrt()
        ));
        let g = grid(2, 2);
        assert!(close(
            max_dist_to_cell(&[0.25, 0.25], CellId(0), &g),
            2f64.sqrt() * 0.25
        ));
    }

    #[test]
    fn overlap_examples() {
        let g = grid(2, 2);
        let center = [0.2, 0.3];
        let home = cell_of(&center, &g).unwrap();
        assert!(overlapped_cells(&BoundaryShape::new(&center, 0.1), home, &g).is_empty());

        let center = [0.49, 0.49];
        let home = cell_of(&center, &g).unwrap();
        assert_eq!(home, g.linear(&[0, 0]));
        let got = overlapped_cells(&BoundaryShape::new(&center, 0.05), home, &g);
        let mut want = vec![g.linear(&[1, 0]), g.linear(&[0, 1]), g.linear(&[1, 1])];
        want.sort();
        assert_eq!(got, want);
    }

    #[test]
    fn overlap_one_dimensional_matches_exhaustive_scan() {
        let g = grid(1, 4);
        let center = [0.30];
        let home = cell_of(&center, &g).unwrap();
        assert_eq!(home, CellId(1));
        let brute: Vec<CellId> = (0..4)
            .map(CellId)
            .filter(|&c| c != home && min_dist_to_cell(&center, c, &g) < 0.06)
            .collect();
        assert_eq!(brute, vec![CellId(0)]);
        assert_eq!(
            overlapped_cells(&BoundaryShape::new(&center, 0.06), home, &g),
            brute
        );
    }

    #[test]
    fn tangent_ball_does_not_overlap() {
        let g = grid(1, 4);
        let center = [0.375];
        let home = cell_of(&center, &g).unwrap();
        assert!(overlapped_cells(&BoundaryShape::new(&center, 0.125), home, &g).is_empty());
    }

    #[test]
    fn contained_cells_use_closed_ball() {
        let g = grid(1, 4);
        let center = [0.5];
        let mut got = Vec::new();
        for_each_contained_cell(
            &BoundaryShape::new(&center, 0.25),
            cell_of(&center, &g).unwrap(),
            &g,
            |c| got.push(c),
        );
        got.sort();
        assert_eq!(got, vec![CellId(1), CellId(2)]);
    }
}
