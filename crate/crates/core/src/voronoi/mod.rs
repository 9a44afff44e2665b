//! Delaunay edges and Voronoi cell volumes from finalized sites.
//!
//! The Voronoi facet between a site `s` and a neighbour `n` is the polygon of
//! circumcenters of the tetrahedra around the edge `(s, n)`. The cell volume
//! is the sum of the pyramids with apex `s` over those facets.

mod io;

use std::collections::BTreeMap;

use thiserror::Error;

pub use io::{read_edges, read_volumes, EdgeWriter, OutputFormat, VolumeWriter, EDGE_BYTES, VOLUME_BYTES};

use crate::geometry::{tet_volume, Point3};

/// Volume reported for cells that are not bounded (convex-hull sites).
pub const UNBOUNDED: f64 = -1.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum VoronoiError {
    #[error("tetrahedra around edge ({site}, {neighbor}) do not form a closed ring")]
    OpenRing { site: u32, neighbor: u32 },
    #[error("site {neighbor} is not a neighbour of {site}")]
    NotANeighbor { site: u32, neighbor: u32 },
}

/// A real tetrahedron incident to a finalized site.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IncidentTet {
    pub ids: [u32; 4],
    pub circumcenter: Point3,
}

impl IncidentTet {
    fn sorted_ids(&self) -> [u32; 4] {
        let mut k = self.ids;
        k.sort_unstable();
        k
    }
}

/// A site whose incident tetrahedra have all left the frontier; its
/// neighbourhood is complete.
#[derive(Debug, Clone, PartialEq)]
pub struct FinalizedSite {
    /// Position in finalization order.
    pub seq: u64,
    pub id: u32,
    pub position: Point3,
    /// Delaunay neighbours, sorted.
    pub neighbors: Vec<u32>,
    /// The subset of `neighbors` finalized before this site, sorted.
    pub finalized_neighbors: Vec<u32>,
    pub incident: Vec<IncidentTet>,
    /// Had a tetrahedron touching the super-simplex.
    pub hull: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct EdgeRecord {
    pub a: u32,
    pub b: u32,
}

impl EdgeRecord {
    pub fn new(u: u32, v: u32) -> Self {
        EdgeRecord {
            a: u.min(v),
            b: u.max(v),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VolumeRecord {
    pub id: u32,
    pub volume: f64,
}

impl VolumeRecord {
    pub fn is_bounded(&self) -> bool {
        self.volume >= 0.0
    }
}

/// Edges from `site` to neighbours that finalized earlier. Each edge is
/// emitted exactly once, by the later of its two endpoints.
pub fn extract_edges(site: &FinalizedSite, already_finalized: impl Fn(u32) -> bool) -> Vec<EdgeRecord> {
    site.neighbors
        .iter()
        .copied()
        .filter(|&n| already_finalized(n))
        .map(|n| EdgeRecord::new(site.id, n))
        .collect()
}

/// Edges using the finalization snapshot carried by the site itself.
pub fn site_edges(site: &FinalizedSite) -> Vec<EdgeRecord> {
    extract_edges(site, |n| site.finalized_neighbors.binary_search(&n).is_ok())
}

/// Incident tetrahedra in canonical order, grouped by neighbour.
fn rings(site: &FinalizedSite) -> BTreeMap<u32, Vec<IncidentTet>> {
    let mut tets = site.incident.clone();
    tets.sort_by_key(|t| t.sorted_ids());
    let mut by_neighbor: BTreeMap<u32, Vec<IncidentTet>> = BTreeMap::new();
    for t in tets {
        for n in t.ids {
            if n != site.id {
                by_neighbor.entry(n).or_default().push(t);
            }
        }
    }
    by_neighbor
}

/// Order the tetrahedra around edge `(s, n)` so consecutive ones share a face.
fn order_ring(s: u32, n: u32, tets: &[IncidentTet]) -> Result<Vec<Point3>, VoronoiError> {
    let open = || VoronoiError::OpenRing { site: s, neighbor: n };
    if tets.len() < 3 {
        return Err(open());
    }
    let others: Vec<[u32; 2]> = tets
        .iter()
        .map(|t| {
            let mut o = [0u32; 2];
            let mut k = 0;
            for id in t.ids {
                if id != s && id != n {
                    if k == 2 {
                        return Err(open());
                    }
                    o[k] = id;
                    k += 1;
                }
            }
            if k != 2 {
                return Err(open());
            }
            Ok(o)
        })
        .collect::<Result<_, _>>()?;
    let mut by_vertex: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
    for (i, o) in others.iter().enumerate() {
        for v in o {
            by_vertex.entry(*v).or_default().push(i);
        }
    }
    if by_vertex.values().any(|l| l.len() != 2) {
        return Err(open());
    }
    let mut out = Vec::with_capacity(tets.len());
    let mut cur = 0usize;
    let mut via = others[0][0].max(others[0][1]);
    for _ in 0..tets.len() {
        out.push(tets[cur].circumcenter);
        let l = &by_vertex[&via];
        let next = if l[0] == cur { l[1] } else { l[0] };
        let o = others[next];
        via = if o[0] == via { o[1] } else { o[0] };
        cur = next;
        if cur == 0 {
            break;
        }
    }
    if cur != 0 || out.len() != tets.len() {
        return Err(open());
    }
    Ok(out)
}

fn cell_scale(site: &FinalizedSite) -> f64 {
    site.incident
        .iter()
        .map(|t| t.circumcenter.dist_sq(&site.position))
        .fold(0.0, f64::max)
        .sqrt()
}

fn merge_close(mut poly: Vec<Point3>, tol: f64) -> Vec<Point3> {
    let tol2 = tol * tol;
    poly.dedup_by(|b, a| a.dist_sq(b) <= tol2);
    while poly.len() > 1 && poly[0].dist_sq(poly.last().unwrap()) <= tol2 {
        poly.pop();
    }
    poly
}

/// Circumcenters of the tetrahedra sharing edge `(site, neighbor)`, in ring
/// order.
pub fn facet_polygon(site: &FinalizedSite, neighbor: u32) -> Result<Vec<Point3>, VoronoiError> {
    let rings = rings(site);
    let tets = rings.get(&neighbor).ok_or(VoronoiError::NotANeighbor {
        site: site.id,
        neighbor,
    })?;
    order_ring(site.id, neighbor, tets)
}

/// All facets of a bounded cell, keyed by neighbour, with near-coincident
/// vertices merged.
pub fn cell_facets(site: &FinalizedSite) -> Result<Vec<(u32, Vec<Point3>)>, VoronoiError> {
    let tol = 1e-12 * cell_scale(site);
    rings(site)
        .into_iter()
        .map(|(n, tets)| Ok((n, merge_close(order_ring(site.id, n, &tets)?, tol))))
        .collect()
}

fn pyramid_volume(apex: &Point3, poly: &[Point3]) -> f64 {
    if poly.len() < 3 {
        return 0.0;
    }
    let v0 = &poly[0];
    poly[1..]
        .windows(2)
        .map(|w| tet_volume(apex, v0, &w[0], &w[1]))
        .sum()
}

pub fn cell_volume(site: &FinalizedSite) -> Result<VolumeRecord, VoronoiError> {
    if site.hull {
        return Ok(VolumeRecord {
            id: site.id,
            volume: UNBOUNDED,
        });
    }
    let volume = cell_facets(site)?
        .iter()
        .map(|(_, poly)| pyramid_volume(&site.position, poly))
        .sum();
    Ok(VolumeRecord { id: site.id, volume })
}
