//! Deterministic synthetic workloads.

use std::io;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, UnitSphere};

use crate::extsort::{SiteRecord, SiteWriter};
use crate::geometry::Point3;

/// Homogeneous points in `[0, Δx] × [0, Δy] × [0, Δz]` at density `ρ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyntheticBoxSpec {
    pub extents: [f64; 3],
    pub density: f64,
    pub seed: u64,
}

impl SyntheticBoxSpec {
    /// The unit-cross-section slab used for the Δx scaling runs.
    pub fn slab(dx: f64, density: f64, seed: u64) -> Self {
        SyntheticBoxSpec {
            extents: [dx, 1.0, 1.0],
            density,
            seed,
        }
    }

    pub fn count(&self) -> u64 {
        (self.density * self.extents.iter().product::<f64>()).round() as u64
    }

    pub fn is_valid(&self) -> bool {
        self.extents.iter().all(|e| e.is_finite() && *e > 0.0) && self.density.is_finite() && self.density > 0.0
    }
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Sites of a box workload, ids `0..N` in generation order.
pub fn generate_box(spec: &SyntheticBoxSpec) -> impl Iterator<Item = SiteRecord> {
    let mut r = rng(spec.seed);
    let [dx, dy, dz] = spec.extents;
    (0..spec.count()).map(move |i| {
        let p = Point3::new(r.random::<f64>() * dx, r.random::<f64>() * dy, r.random::<f64>() * dz);
        SiteRecord::new(i as u32, p)
    })
}

pub fn write_sites_from(path: &Path, sites: impl IntoIterator<Item = SiteRecord>) -> io::Result<u64> {
    let mut w = SiteWriter::create(path)?;
    for s in sites {
        w.write(&s)?;
    }
    let n = w.written();
    w.finish()?;
    Ok(n)
}

pub fn write_box(spec: &SyntheticBoxSpec, path: &Path) -> io::Result<u64> {
    write_sites_from(path, generate_box(spec))
}

/// `n` uniform points in the unit cube.
pub fn uniform_cube(n: usize, seed: u64) -> Vec<Point3> {
    let mut r = rng(seed);
    (0..n)
        .map(|_| Point3::new(r.random(), r.random(), r.random()))
        .collect()
}

/// `n` points in a thin spherical shell of outer radius `radius` and relative
/// thickness `thickness` around the origin.
pub fn spherical_shell(n: usize, radius: f64, thickness: f64, seed: u64) -> Vec<Point3> {
    let mut r = rng(seed);
    (0..n)
        .map(|_| {
            let [x, y, z]: [f64; 3] = UnitSphere.sample(&mut r);
            let s = radius * (1.0 - thickness * r.random::<f64>());
            Point3::new(x * s, y * s, z * s)
        })
        .collect()
}

/// `k³` lattice points with the given spacing, each coordinate displaced by
/// a uniform amount in `[-jitter, jitter]`. Zero jitter gives the exact lattice.
pub fn jittered_lattice(k: usize, spacing: f64, jitter: f64, seed: u64) -> Vec<Point3> {
    let mut r = rng(seed);
    let mut out = Vec::with_capacity(k * k * k);
    for i in 0..k {
        for j in 0..k {
            for l in 0..k {
                let mut c = [i, j, l].map(|v| v as f64 * spacing);
                if jitter > 0.0 {
                    for v in &mut c {
                        *v += r.random_range(-jitter..=jitter);
                    }
                }
                out.push(Point3::new(c[0], c[1], c[2]));
            }
        }
    }
    out
}

pub fn to_records(points: &[Point3]) -> Vec<SiteRecord> {
    points
        .iter()
        .enumerate()
        .map(|(i, p)| SiteRecord::new(i as u32, *p))
        .collect()
}
