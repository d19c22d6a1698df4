//! Exact all-k-nearest-neighbor classification over an equal-cell grid,
//! run as staged map/shuffle/reduce jobs on an in-process engine.

pub mod bench;
pub mod data_io;
pub mod error;
pub mod geometry;
pub mod grid;
pub mod knn;
pub mod method;
pub mod oracle;
pub mod pipeline;
pub mod point;
pub mod quality;
pub mod runtime;

pub use error::{Error, Result};
pub use geometry::{
    cell_of, euclidean_distance, max_dist_to_cell, min_dist_to_cell, overlapped_cells, BoundaryShape, CellId, GridSpec,
};
pub use grid::{compute_distribution, count_in_shape_lower_bound, merge_cells, CellStats, MergeStats, MergedGrid};
pub use knn::{majority_class, Classification, KnnList, NeighborEntry};
pub use method::{Method, MethodRegistry, Partitioning, QuadTreeMerge, RadiusGrowth};
pub use oracle::{oracle_aknnc, OracleOutput};
pub use pipeline::{run_aknnc, AknncOutput, Fault, PipelineConfig, WorkSummary};
pub use point::{ClassId, ClassTable, Point, TrainingSet};
pub use quality::QualityReport;
pub use runtime::{Engine, JobError};
