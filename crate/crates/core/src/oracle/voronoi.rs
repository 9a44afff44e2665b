//! Voronoi cells by brute-force half-space intersection.

use num_rational::BigRational;

use crate::geometry::{BoundingBox, Point3};
use crate::voronoi::UNBOUNDED;

use super::polytope::{HalfSpace, Polytope, Scalar, SEED_LABEL, V3};
use super::OracleError;

pub const VORONOI_LIMIT: usize = 5_000;

/// The seed cube half-width as a multiple of the point-set diameter.
pub const SEED_SCALE: f64 = 1e4;

/// An oracle cell: volume plus one facet per contributing neighbour index.
#[derive(Debug, Clone)]
pub struct OracleCell {
    pub volume: f64,
    pub facets: Vec<(usize, Vec<Point3>)>,
    /// A face of the seed cube survived: the true cell is unbounded.
    pub touches_seed: bool,
}

fn check(i: usize, points: &[Point3]) -> Result<(), OracleError> {
    if points.len() > VORONOI_LIMIT {
        return Err(OracleError::SizeLimit {
            n: points.len(),
            limit: VORONOI_LIMIT,
        });
    }
    if i >= points.len() {
        return Err(OracleError::Inconsistent(format!("site index {i} out of range")));
    }
    if let Some(j) = points.iter().position(|p| !p.is_finite()) {
        return Err(OracleError::NonFinite(j));
    }
    Ok(())
}

fn to_v3<S: Scalar>(p: &Point3) -> V3<S> {
    [S::from_f64(p.x), S::from_f64(p.y), S::from_f64(p.z)]
}

/// Clip `seed` (coordinates relative to site `i`) by every bisector, nearest
/// first, stopping once no remaining bisector can reach the polytope.
fn clip_cell<S: Scalar>(i: usize, points: &[Point3], mut cell: Polytope<S>) -> Polytope<S> {
    let origin = points[i];
    let mut order: Vec<usize> = (0..points.len()).filter(|&j| j != i).collect();
    order.sort_by(|&a, &b| {
        points[a]
            .dist_sq(&origin)
            .total_cmp(&points[b].dist_sq(&origin))
            .then(a.cmp(&b))
    });
    let half = S::from_f64(0.5);
    let mut reach_sq = f64::INFINITY;
    for (k, &j) in order.iter().enumerate() {
        let d_sq = points[j].dist_sq(&origin);
        if d_sq == 0.0 {
            // coincident site: the cell is empty
            return Polytope { faces: Vec::new() };
        }
        if d_sq / 4.0 > reach_sq * (1.0 + 1e-9) {
            break;
        }
        let q: V3<S> = to_v3(&(points[j] - origin));
        let offset = (q[0].clone() * q[0].clone() + q[1].clone() * q[1].clone() + q[2].clone() * q[2].clone())
            * half.clone();
        let h = HalfSpace { normal: q, offset };
        cell.clip(&h, j);
        if cell.is_empty() {
            break;
        }
        if k % 8 == 7 || k + 1 == order.len() {
            reach_sq = if cell.faces.iter().any(|f| f.label == SEED_LABEL) {
                f64::INFINITY
            } else {
                cell.vertices()
                    .map(|v| {
                        let (x, y, z) = (v[0].to_f64(), v[1].to_f64(), v[2].to_f64());
                        x * x + y * y + z * z
                    })
                    .fold(0.0, f64::max)
            };
        }
    }
    cell
}

fn summarize<S: Scalar>(origin: Point3, cell: &Polytope<S>) -> (f64, Vec<(usize, Vec<Point3>)>, bool) {
    let zero: V3<S> = [S::zero(), S::zero(), S::zero()];
    let volume = if cell.is_empty() { 0.0 } else { cell.volume_from(&zero).to_f64() };
    let mut facets: Vec<(usize, Vec<Point3>)> = cell
        .faces
        .iter()
        .filter(|f| f.label != SEED_LABEL)
        .map(|f| {
            let poly = f
                .verts
                .iter()
                .map(|v| origin + Point3::new(v[0].to_f64(), v[1].to_f64(), v[2].to_f64()))
                .collect();
            (f.label, poly)
        })
        .collect();
    facets.sort_by_key(|(j, _)| *j);
    let touches_seed = cell.faces.iter().any(|f| f.label == SEED_LABEL);
    (volume, facets, touches_seed)
}

fn seed_cube<S: Scalar>(points: &[Point3]) -> Polytope<S> {
    let d = BoundingBox::from_points(points).diameter().max(1.0);
    let h = S::from_f64(SEED_SCALE * d);
    let m = -h.clone();
    Polytope::cuboid([m.clone(), m.clone(), m], [h.clone(), h.clone(), h])
}

/// The cell of site `i` clipped from a seed cube of half-width
/// `SEED_SCALE · diameter`, in floating point.
pub fn voronoi_cell_oracle(i: usize, points: &[Point3]) -> Result<OracleCell, OracleError> {
    check(i, points)?;
    let cell = clip_cell::<f64>(i, points, seed_cube(points));
    let (volume, facets, touches_seed) = summarize(points[i], &cell);
    Ok(OracleCell {
        volume,
        facets,
        touches_seed,
    })
}

/// Volume of the Voronoi cell of site `i`, or `UNBOUNDED` when a face of
/// the seed cube survives clipping.
pub fn voronoi_volume_oracle(i: usize, points: &[Point3]) -> Result<f64, OracleError> {
    let c = voronoi_cell_oracle(i, points)?;
    Ok(if c.touches_seed { UNBOUNDED } else { c.volume })
}

/// As `voronoi_volume_oracle`, with every intersection computed in exact
/// rational arithmetic; only the final volume is rounded.
pub fn voronoi_volume_exact(i: usize, points: &[Point3]) -> Result<f64, OracleError> {
    check(i, points)?;
    let cell = clip_cell::<BigRational>(i, points, seed_cube(points));
    let (volume, _, touches_seed) = summarize(points[i], &cell);
    Ok(if touches_seed { UNBOUNDED } else { volume })
}

/// Volume of the cell of site `i` clipped to `seed` (absolute coordinates),
/// without the unbounded check.
pub fn voronoi_volume_in_box(i: usize, points: &[Point3], seed: &BoundingBox) -> Result<f64, OracleError> {
    check(i, points)?;
    let o = points[i];
    let cube = Polytope::<f64>::cuboid((seed.min - o).to_array(), (seed.max - o).to_array());
    let cell = clip_cell(i, points, cube);
    Ok(summarize(o, &cell).0)
}
