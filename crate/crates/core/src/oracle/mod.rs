//! Brute-force references for cross-validation and synthetic workloads.

mod delaunay;
mod generate;
pub mod polytope;
mod voronoi;

use thiserror::Error;

pub use delaunay::{delaunay_exhaustive, delaunay_oracle, is_empty_sphere, DELAUNAY_LIMIT, EXHAUSTIVE_LIMIT};
pub use generate::{
    generate_box, jittered_lattice, spherical_shell, to_records, uniform_cube, write_box, write_sites_from,
    SyntheticBoxSpec,
};
pub use voronoi::{
    voronoi_cell_oracle, voronoi_volume_exact, voronoi_volume_in_box, voronoi_volume_oracle, OracleCell,
    SEED_SCALE, VORONOI_LIMIT,
};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum OracleError {
    #[error("{n} points exceed the oracle limit of {limit}")]
    SizeLimit { n: usize, limit: usize },
    #[error("point {0} has a non-finite coordinate")]
    NonFinite(usize),
    #[error("points {0} and {1} coincide")]
    DuplicatePoint(usize, usize),
    #[error("oracle self-check failed: {0}")]
    Inconsistent(String),
}
