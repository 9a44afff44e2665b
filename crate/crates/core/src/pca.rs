//! Sweep direction by principal component analysis, the rigid transform into
//! sweep coordinates, and tail trimming along the sweep axis.

use std::fmt::Write as _;
use std::io;
use std::path::Path;

use nalgebra::{Matrix3, SymmetricEigen, Vector3};
use thiserror::Error;

use crate::geometry::{BoundingBox, Point3};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PcaError {
    #[error("need at least 4 points, got {0}")]
    TooFewPoints(u64),
    #[error("all sample points coincide")]
    DegenerateSample,
    #[error("trim fraction {0} outside [0, 0.5)")]
    BadFraction(f64),
    #[error("no coordinates to trim")]
    Empty,
}

/// Proper rotation; rows are the axes, by descending variance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rotation3 {
    pub rows: [[f64; 3]; 3],
}

impl Rotation3 {
    pub const IDENTITY: Rotation3 = Rotation3 {
        rows: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
    };

    pub fn axis(&self, i: usize) -> Point3 {
        Point3::from(self.rows[i])
    }

    pub fn apply(&self, v: &Point3) -> Point3 {
        Point3::new(self.axis(0).dot(v), self.axis(1).dot(v), self.axis(2).dot(v))
    }

    pub fn apply_transpose(&self, v: &Point3) -> Point3 {
        self.axis(0) * v.x + self.axis(1) * v.y + self.axis(2) * v.z
    }

    pub fn determinant(&self) -> f64 {
        self.axis(0).dot(&self.axis(1).cross(&self.axis(2)))
    }

    /// Largest deviation of `R Rᵀ` from the identity.
    pub fn orthonormality_error(&self) -> f64 {
        let mut e: f64 = 0.0;
        for i in 0..3 {
            for j in 0..3 {
                let d = self.axis(i).dot(&self.axis(j)) - if i == j { 1.0 } else { 0.0 };
                e = e.max(d.abs());
            }
        }
        e
    }
}

/// First and second moments, mergeable across chunks.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct MomentAccumulator {
    n: u64,
    mean: [f64; 3],
    /// Sum of outer products of deviations from the mean.
    m2: [[f64; 3]; 3],
}

impl MomentAccumulator {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, p: &Point3) {
        self.n += 1;
        let x = p.to_array();
        let n = self.n as f64;
        let d: [f64; 3] = std::array::from_fn(|k| x[k] - self.mean[k]);
        for k in 0..3 {
            self.mean[k] += d[k] / n;
        }
        let d2: [f64; 3] = std::array::from_fn(|k| x[k] - self.mean[k]);
        for i in 0..3 {
            for j in 0..3 {
                self.m2[i][j] += d[i] * d2[j];
            }
        }
    }

    pub fn merge(&mut self, o: &MomentAccumulator) {
        if o.n == 0 {
            return;
        }
        if self.n == 0 {
            *self = *o;
            return;
        }
        let (na, nb) = (self.n as f64, o.n as f64);
        let n = na + nb;
        let d: [f64; 3] = std::array::from_fn(|k| o.mean[k] - self.mean[k]);
        for i in 0..3 {
            for j in 0..3 {
                self.m2[i][j] += o.m2[i][j] + d[i] * d[j] * na * nb / n;
            }
        }
        for k in 0..3 {
            self.mean[k] += d[k] * nb / n;
        }
        self.n += o.n;
    }

    pub fn count(&self) -> u64 {
        self.n
    }

    pub fn centroid(&self) -> Point3 {
        Point3::from(self.mean)
    }

    /// Sample covariance (divides by n − 1).
    pub fn covariance(&self) -> [[f64; 3]; 3] {
        let d = (self.n.max(2) - 1) as f64;
        self.m2.map(|r| r.map(|v| v / d))
    }
}

/// Flip `v` so its largest-magnitude component (first on ties) is positive.
fn sign_normalize(v: Vector3<f64>) -> Vector3<f64> {
    let mut k = 0;
    for i in 1..3 {
        if v[i].abs() > v[k].abs() {
            k = i;
        }
    }
    if v[k] < 0.0 {
        -v
    } else {
        v
    }
}

/// Principal axes of accumulated moments.
pub fn axes_from_moments(m: &MomentAccumulator) -> Result<(Point3, Rotation3), PcaError> {
    if m.count() < 4 {
        return Err(PcaError::TooFewPoints(m.count()));
    }
    let c = m.covariance();
    let cov = Matrix3::from_fn(|i, j| c[i][j]);
    let eig = SymmetricEigen::new(cov);
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let top = eig.eigenvalues[order[0]];
    let scale = (0..3).map(|i| c[i][i].abs()).fold(0.0, f64::max);
    if !(top > 0.0) || top <= 1e-300 || scale == 0.0 {
        return Err(PcaError::DegenerateSample);
    }
    let a0 = sign_normalize(eig.eigenvectors.column(order[0]).normalize());
    let mut a1 = eig.eigenvectors.column(order[1]).into_owned();
    // re-orthogonalize against the first axis before normalizing
    a1 -= a0 * a0.dot(&a1);
    let a1 = sign_normalize(a1.normalize());
    let a2 = a0.cross(&a1).normalize();
    let rows = [
        [a0[0], a0[1], a0[2]],
        [a1[0], a1[1], a1[2]],
        [a2[0], a2[1], a2[2]],
    ];
    Ok((m.centroid(), Rotation3 { rows }))
}

/// Centroid and principal axes of a sample, axes by descending variance.
pub fn principal_axes<'a>(sample: impl IntoIterator<Item = &'a Point3>) -> Result<(Point3, Rotation3), PcaError> {
    let mut m = MomentAccumulator::new();
    for p in sample {
        m.add(p);
    }
    axes_from_moments(&m)
}

/// `r · (p − centroid)`; the first coordinate is the sweep coordinate.
pub fn transform(p: &Point3, centroid: &Point3, r: &Rotation3) -> Point3 {
    r.apply(&(*p - *centroid))
}

pub fn inverse_transform(q: &Point3, centroid: &Point3, r: &Rotation3) -> Point3 {
    r.apply_transpose(q) + *centroid
}

/// Number of records cut from each tail: `⌊fraction/2 · n⌋`.
pub fn trim_count(n: u64, fraction: f64) -> u64 {
    let k = (fraction / 2.0 * n as f64 + 1e-9).floor() as u64;
    if 2 * k >= n {
        n.saturating_sub(1) / 2
    } else {
        k
    }
}

/// Exact `(fraction/2)` and `(1 − fraction/2)` nearest-rank quantiles: with
/// the values sorted, `(v[k], v[n − 1 − k])` for `k = trim_count(n, fraction)`.
pub fn trim_interval(coords: impl IntoIterator<Item = f64>, fraction: f64) -> Result<(f64, f64), PcaError> {
    if !(0.0..0.5).contains(&fraction) {
        return Err(PcaError::BadFraction(fraction));
    }
    let mut v: Vec<f64> = coords.into_iter().collect();
    if v.is_empty() {
        return Err(PcaError::Empty);
    }
    let n = v.len();
    let k = trim_count(n as u64, fraction) as usize;
    let (_, lo, _) = v.select_nth_unstable_by(k, f64::total_cmp);
    let lo = *lo;
    let (_, hi, _) = v.select_nth_unstable_by(n - 1 - k, f64::total_cmp);
    Ok((lo, *hi))
}

/// What is needed to map outputs back to input coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransformHeader {
    pub centroid: Point3,
    pub rotation: Rotation3,
    pub trim_fraction: f64,
    pub trim: Option<(f64, f64)>,
    /// Bounding box of the kept sites in sweep coordinates.
    pub bbox: Option<BoundingBox>,
}

fn fmt_point(p: &Point3) -> String {
    format!("{:?} {:?} {:?}", p.x, p.y, p.z)
}

impl TransformHeader {
    pub fn identity() -> Self {
        TransformHeader {
            centroid: Point3::new(0.0, 0.0, 0.0),
            rotation: Rotation3::IDENTITY,
            trim_fraction: 0.0,
            trim: None,
            bbox: None,
        }
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "# sweep coordinates: q = R (p - centroid)");
        let _ = writeln!(s, "centroid {}", fmt_point(&self.centroid));
        for i in 0..3 {
            let _ = writeln!(s, "axis{i} {}", fmt_point(&self.rotation.axis(i)));
        }
        let _ = writeln!(s, "trim_fraction {:?}", self.trim_fraction);
        if let Some((lo, hi)) = self.trim {
            let _ = writeln!(s, "trim {lo:?} {hi:?}");
        }
        if let Some(b) = self.bbox {
            let _ = writeln!(s, "bbox_min {}", fmt_point(&b.min));
            let _ = writeln!(s, "bbox_max {}", fmt_point(&b.max));
        }
        s
    }

    pub fn parse(text: &str) -> io::Result<Self> {
        let bad = |m: &str| io::Error::new(io::ErrorKind::InvalidData, format!("header: {m}"));
        let mut h = TransformHeader::identity();
        let (mut bmin, mut bmax) = (None, None);
        for line in text.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#')) {
            let mut parts = line.split_whitespace();
            let key = parts.next().unwrap_or_default();
            let vals: Vec<f64> = parts
                .map(|t| t.parse::<f64>().map_err(|_| bad(line)))
                .collect::<io::Result<_>>()?;
            let point = || -> io::Result<Point3> {
                match vals[..] {
                    [x, y, z] => Ok(Point3::new(x, y, z)),
                    _ => Err(bad(line)),
                }
            };
            match key {
                "centroid" => h.centroid = point()?,
                "axis0" | "axis1" | "axis2" => {
                    let i = (key.as_bytes()[4] - b'0') as usize;
                    h.rotation.rows[i] = point()?.to_array();
                }
                "trim_fraction" => h.trim_fraction = *vals.first().ok_or_else(|| bad(line))?,
                "trim" => match vals[..] {
                    [lo, hi] => h.trim = Some((lo, hi)),
                    _ => return Err(bad(line)),
                },
                "bbox_min" => bmin = Some(point()?),
                "bbox_max" => bmax = Some(point()?),
                _ => return Err(bad(line)),
            }
        }
        if let (Some(a), Some(b)) = (bmin, bmax) {
            h.bbox = Some(BoundingBox::new(a, b));
        }
        Ok(h)
    }

    pub fn write(&self, path: &Path) -> io::Result<()> {
        std::fs::write(path, self.to_text())
    }

    pub fn read(path: &Path) -> io::Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }
}
