//! Out-of-core Delaunay tessellation and Voronoi cell volumes for large 3D
//! point sets by plane-sweep incremental insertion.
//!
//! Sites are rotated onto their first principal axis, externally sorted
//! along it, and inserted in order. Tetrahedra whose circumspheres the sweep
//! plane has passed are evicted and streamed out, together with every site
//! whose neighbourhood is complete.

pub mod extsort;
pub mod geometry;
pub mod oracle;
pub mod pca;
pub mod pipeline;
pub mod sweep;
pub mod voronoi;

pub use extsort::SiteRecord;
pub use geometry::{BoundingBox, Point3};
