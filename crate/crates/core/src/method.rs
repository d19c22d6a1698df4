//! The interchangeable processing methods and their registry.
//!
//! A method decides the unit of locality the jobs key their records by:
//! `kdann+` keys by base grid cell and grows search radii from the
//! distribution counts, `kdann` first merges deficient cells into quad-tree
//! regions and keys by region.

use std::collections::BTreeMap;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::geometry::{min_dist_to_cell, overlapped_cells, window_cell_count, BoundaryShape, CellId, GridSpec};
use crate::grid::{merge_cells, CellStats, MergeStats, MergedGrid};

/// Mapping from base cells to the units the jobs shuffle on.
pub trait Partitioning: Send + Sync {
    fn unit_of(&self, cell: CellId) -> u64;

    /// Units other than `home_unit` that the open ball reaches.
    fn overlapped_units(&self, shape: &BoundaryShape<'_>, home_cell: CellId, home_unit: u64) -> Vec<u64>;

    fn merge_stats(&self) -> Option<MergeStats> {
        None
    }
}

pub trait Method: Send + Sync {
    fn name(&self) -> &'static str;

    fn check_grid(&self, grid: &GridSpec) -> Result<()>;

    /// Whether [`Method::partition`] is a merging phase worth timing.
    fn merges(&self) -> bool;

    fn partition(&self, stats: &CellStats, k: usize, grid: &GridSpec) -> Result<Box<dyn Partitioning>>;
}

/// Radius growth over the plain grid.
#[derive(Debug, Default, Clone, Copy)]
pub struct RadiusGrowth;

struct BaseCells {
    grid: GridSpec,
    /// Cells holding training points, sorted.
    occupied: Vec<CellId>,
}

impl BaseCells {
    fn new(stats: &CellStats, grid: &GridSpec) -> Self {
        let mut occupied: Vec<CellId> = stats.iter().map(|(c, _)| c).collect();
        occupied.sort_unstable();
        Self { grid: *grid, occupied }
    }
}

impl Partitioning for BaseCells {
    #[inline]
    fn unit_of(&self, cell: CellId) -> u64 {
        cell.0
    }

    /// Only cells with training points; an empty cell has nothing to add.
    fn overlapped_units(&self, shape: &BoundaryShape<'_>, home_cell: CellId, _home_unit: u64) -> Vec<u64> {
        // sparse grids: scanning the occupied cells beats walking the window
        if (self.occupied.len() as f64) < window_cell_count(shape.radius, &self.grid) {
            return self
                .occupied
                .iter()
                .filter(|&&c| c != home_cell && min_dist_to_cell(shape.center, c, &self.grid) < shape.radius)
                .map(|c| c.0)
                .collect();
        }
        overlapped_cells(shape, home_cell, &self.grid)
            .into_iter()
            .filter(|c| self.occupied.binary_search(c).is_ok())
            .map(|c| c.0)
            .collect()
    }
}

impl Method for RadiusGrowth {
    fn name(&self) -> &'static str {
        "kdann+"
    }

    fn check_grid(&self, _grid: &GridSpec) -> Result<()> {
        Ok(())
    }

    fn merges(&self) -> bool {
        false
    }

    fn partition(&self, stats: &CellStats, _k: usize, grid: &GridSpec) -> Result<Box<dyn Partitioning>> {
        Ok(Box::new(BaseCells::new(stats, grid)))
    }
}

/// Quad-tree merging of deficient cells before the search.
#[derive(Debug, Default, Clone, Copy)]
pub struct QuadTreeMerge;

struct Regions(MergedGrid);

impl Partitioning for Regions {
    #[inline]
    fn unit_of(&self, cell: CellId) -> u64 {
        self.0.region_of(cell)
    }

    fn overlapped_units(&self, shape: &BoundaryShape<'_>, _home_cell: CellId, home_unit: u64) -> Vec<u64> {
        self.0.overlapped_regions(shape, home_unit)
    }

    fn merge_stats(&self) -> Option<MergeStats> {
        Some(*self.0.stats())
    }
}

impl Method for QuadTreeMerge {
    fn name(&self) -> &'static str {
        "kdann"
    }

    fn check_grid(&self, grid: &GridSpec) -> Result<()> {
        if grid.is_power_of_two() {
            Ok(())
        } else {
            Err(Error::Config(format!(
                "kdann needs cells per axis to be a power of two, got {}",
                grid.cells_per_axis()
            )))
        }
    }

    fn merges(&self) -> bool {
        true
    }

    fn partition(&self, stats: &CellStats, k: usize, grid: &GridSpec) -> Result<Box<dyn Partitioning>> {
        Ok(Box::new(Regions(merge_cells(stats, k, grid)?)))
    }
}

/// Methods by name.
#[derive(Clone)]
pub struct MethodRegistry {
    methods: BTreeMap<&'static str, Arc<dyn Method>>,
}

impl MethodRegistry {
    pub fn empty() -> Self {
        Self {
            methods: BTreeMap::new(),
        }
    }

    pub fn register(&mut self, method: Arc<dyn Method>) -> Option<Arc<dyn Method>> {
        self.methods.insert(method.name(), method)
    }

    pub fn get(&self, name: &str) -> Result<Arc<dyn Method>> {
        self.methods.get(name).cloned().ok_or_else(|| {
            Error::Config(format!(
                "unknown method `{name}` (known: {})",
                self.names().join(", ")
            ))
        })
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.methods.keys().copied().collect()
    }
}

impl Default for MethodRegistry {
    fn default() -> Self {
        let mut r = Self::empty();
        r.register(Arc::new(RadiusGrowth));
        r.register(Arc::new(QuadTreeMerge));
        r
    }
}
