//! Exact-decision geometric predicates and numeric constructions.
//!
//! `orient3d` and `insphere` return decisions that are exact (adaptive
//! floating-point expansions fall back to exact arithmetic when the filter
//! cannot certify the sign). `circumsphere` and `tet_volume` are plain
//! floating-point constructions and are never used for topological decisions.

use std::cmp::Ordering;
use std::fmt;
use std::ops::{Add, Mul, Sub};

use robust::Coord3D;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("degenerate simplex: the four points are coplanar")]
    DegenerateSimplex,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Point3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Point3 {
    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Point3 { x, y, z }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    pub fn dot(&self, o: &Point3) -> f64 {
        self.x * o.x + self.y * o.y + self.z * o.z
    }

    pub fn cross(&self, o: &Point3) -> Point3 {
        Point3::new(
            self.y * o.z - self.z * o.y,
            self.z * o.x - self.x * o.z,
            self.x * o.y - self.y * o.x,
        )
    }

    pub fn norm_sq(&self) -> f64 {
        self.dot(self)
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    pub fn dist_sq(&self, o: &Point3) -> f64 {
        (*self - *o).norm_sq()
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }

    /// Lexicographic (x, y, z) order using IEEE total ordering.
    pub fn lex_cmp(&self, o: &Point3) -> Ordering {
        self.x
            .total_cmp(&o.x)
            .then(self.y.total_cmp(&o.y))
            .then(self.z.total_cmp(&o.z))
    }

    fn coord(self) -> Coord3D<f64> {
        Coord3D {
            x: self.x,
            y: self.y,
            z: self.z,
        }
    }
}

impl From<[f64; 3]> for Point3 {
    fn from(a: [f64; 3]) -> Self {
        Point3::new(a[0], a[1], a[2])
    }
}

impl Add for Point3 {
    type Output = Point3;
    fn add(self, o: Point3) -> Point3 {
        Point3::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl Sub for Point3 {
    type Output = Point3;
    fn sub(self, o: Point3) -> Point3 {
        Point3::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl Mul<f64> for Point3 {
    type Output = Point3;
    fn mul(self, s: f64) -> Point3 {
        Point3::new(self.x * s, self.y * s, self.z * s)
    }
}

impl fmt::Display for Point3 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}, {})", self.x, self.y, self.z)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Sign {
    Negative,
    Zero,
    Positive,
}

impl Sign {
    fn of(v: f64) -> Sign {
        if v > 0.0 {
            Sign::Positive
        } else if v < 0.0 {
            Sign::Negative
        } else {
            Sign::Zero
        }
    }

    pub fn flip(self) -> Sign {
        match self {
            Sign::Negative => Sign::Positive,
            Sign::Zero => Sign::Zero,
            Sign::Positive => Sign::Negative,
        }
    }
}

/// Axis-aligned box; `min <= max` componentwise.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundingBox {
    pub min: Point3,
    pub max: Point3,
}

impl BoundingBox {
    pub fn new(min: Point3, max: Point3) -> Self {
        BoundingBox { min, max }
    }

    /// An empty box that any `include` call will overwrite.
    pub fn empty() -> Self {
        BoundingBox {
            min: Point3::new(f64::INFINITY, f64::INFINITY, f64::INFINITY),
            max: Point3::new(f64::NEG_INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY),
        }
    }

    pub fn is_empty(&self) -> bool {
        !(self.min.x <= self.max.x && self.min.y <= self.max.y && self.min.z <= self.max.z)
    }

    pub fn include(&mut self, p: &Point3) {
        self.min.x = self.min.x.min(p.x);
        self.min.y = self.min.y.min(p.y);
        self.min.z = self.min.z.min(p.z);
        self.max.x = self.max.x.max(p.x);
        self.max.y = self.max.y.max(p.y);
        self.max.z = self.max.z.max(p.z);
    }

    pub fn from_points<'a>(pts: impl IntoIterator<Item = &'a Point3>) -> Self {
        let mut b = BoundingBox::empty();
        for p in pts {
            b.include(p);
        }
        b
    }

    pub fn extent(&self) -> Point3 {
        self.max - self.min
    }

    pub fn diameter(&self) -> f64 {
        self.extent().norm()
    }

    pub fn center(&self) -> Point3 {
        (self.min + self.max) * 0.5
    }

    pub fn volume(&self) -> f64 {
        let e = self.extent();
        e.x * e.y * e.z
    }

    pub fn contains(&self, p: &Point3) -> bool {
        p.x >= self.min.x
            && p.x <= self.max.x
            && p.y >= self.min.y
            && p.y <= self.max.y
            && p.z >= self.min.z
            && p.z <= self.max.z
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Circumsphere {
    pub center: Point3,
    pub radius: f64,
    pub radius_sq: f64,
}

impl Circumsphere {
    pub fn new(center: Point3, radius_sq: f64) -> Self {
        Circumsphere {
            center,
            radius: radius_sq.sqrt(),
            radius_sq,
        }
    }
}

/// Sign of det(b - a, c - a, d - a): positive when `a, b, c` appear
/// counterclockwise seen from `d`.
pub fn orient3d(a: &Point3, b: &Point3, c: &Point3, d: &Point3) -> Sign {
    // robust::orient3d uses the opposite handedness.
    Sign::of(-robust::orient3d(a.coord(), b.coord(), c.coord(), d.coord()))
}

/// Unchecked insphere: `Positive` iff `e` is strictly inside the sphere
/// through a positively oriented `(a, b, c, d)`.
#[inline]
pub fn insphere_sign(a: &Point3, b: &Point3, c: &Point3, d: &Point3, e: &Point3) -> Sign {
    Sign::of(-robust::insphere(
        a.coord(),
        b.coord(),
        c.coord(),
        d.coord(),
        e.coord(),
    ))
}

/// Exact insphere test; `(a, b, c, d)` must be positively oriented.
pub fn insphere(
    a: &Point3,
    b: &Point3,
    c: &Point3,
    d: &Point3,
    e: &Point3,
) -> Result<Sign, GeometryError> {
    match orient3d(a, b, c, d) {
        Sign::Zero => Err(GeometryError::DegenerateSimplex),
        Sign::Positive => Ok(insphere_sign(a, b, c, d, e)),
        Sign::Negative => Ok(insphere_sign(a, b, c, d, e).flip()),
    }
}

/// A point tagged with its symbolic-perturbation rank. Higher ranks carry
/// larger perturbations, so among cospherical points the highest-ranked one
/// is pushed outside.
#[derive(Debug, Clone, Copy)]
pub struct Ranked<'a> {
    pub p: &'a Point3,
    pub rank: u64,
}

/// Insphere with symbolic perturbation of the lifted points, ordered by rank.
///
/// Never returns `Zero` for a non-degenerate, positively oriented tetrahedron
/// with pairwise distinct ranks. The query ranked above all four vertices is
/// always classified outside when it is cospherical.
pub fn insphere_perturbed(tet: [Ranked<'_>; 4], e: Ranked<'_>) -> Sign {
    let s = insphere_sign(tet[0].p, tet[1].p, tet[2].p, tet[3].p, e.p);
    if s != Sign::Zero {
        return s;
    }
    // indices 0..4 = tet vertices, 4 = query
    let mut order = [0usize, 1, 2, 3, 4];
    let rank = |i: usize| if i == 4 { e.rank } else { tet[i].rank };
    order.sort_unstable_by(|&i, &j| rank(j).cmp(&rank(i)));
    for &k in order.iter().take(2) {
        if k == 4 {
            return Sign::Negative;
        }
        let mut q = [tet[0].p, tet[1].p, tet[2].p, tet[3].p];
        q[k] = e.p;
        let o = orient3d(q[0], q[1], q[2], q[3]);
        if o != Sign::Zero {
            return o;
        }
    }
    // Only reachable when the tetrahedron itself is flat.
    Sign::Zero
}

/// Circumsphere of a non-degenerate tetrahedron.
///
/// Vertices are put in lexicographic order first so that the result is
/// bitwise independent of the order the caller lists them in.
pub fn circumsphere(
    a: &Point3,
    b: &Point3,
    c: &Point3,
    d: &Point3,
) -> Result<Circumsphere, GeometryError> {
    if orient3d(a, b, c, d) == Sign::Zero {
        return Err(GeometryError::DegenerateSimplex);
    }
    let mut v = [*a, *b, *c, *d];
    v.sort_unstable_by(|p, q| p.lex_cmp(q));
    let o = v[0];
    let (ba, ca, da) = (v[1] - o, v[2] - o, v[3] - o);
    let det = ba.dot(&ca.cross(&da));
    let num = ca.cross(&da) * ba.norm_sq() + da.cross(&ba) * ca.norm_sq() + ba.cross(&ca) * da.norm_sq();
    let off = num * (0.5 / det);
    let center = o + off;
    if !center.is_finite() {
        return Err(GeometryError::DegenerateSimplex);
    }
    Ok(Circumsphere::new(center, off.norm_sq()))
}

pub fn signed_volume6(a: &Point3, b: &Point3, c: &Point3, d: &Point3) -> f64 {
    (*b - *a).dot(&(*c - *a).cross(&(*d - *a)))
}

pub fn tet_volume(a: &Point3, b: &Point3, c: &Point3, d: &Point3) -> f64 {
    signed_volume6(a, b, c, d).abs() / 6.0
}
