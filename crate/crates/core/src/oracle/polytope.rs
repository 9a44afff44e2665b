//! Convex polytopes cut by half-spaces, generic over the coordinate field so
//! the same code runs in `f64` or in exact rationals.

use std::cmp::Ordering;
use std::ops::{Add, Div, Mul, Neg, Sub};

use num_rational::BigRational;
use num_traits::{Signed, ToPrimitive, Zero};

pub trait Scalar:
    Clone
    + PartialOrd
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
{
    fn from_f64(v: f64) -> Self;
    fn to_f64(&self) -> f64;
    fn zero() -> Self;
    fn sign(&self) -> Ordering;
}

impl Scalar for f64 {
    fn from_f64(v: f64) -> Self {
        v
    }
    fn to_f64(&self) -> f64 {
        *self
    }
    fn zero() -> Self {
        0.0
    }
    fn sign(&self) -> Ordering {
        self.partial_cmp(&0.0).unwrap_or(Ordering::Equal)
    }
}

impl Scalar for BigRational {
    fn from_f64(v: f64) -> Self {
        BigRational::from_float(v).expect("finite coordinate")
    }
    fn to_f64(&self) -> f64 {
        ToPrimitive::to_f64(self).unwrap_or(f64::NAN)
    }
    fn zero() -> Self {
        <BigRational as Zero>::zero()
    }
    fn sign(&self) -> Ordering {
        if self.is_zero() {
            Ordering::Equal
        } else if self.is_positive() {
            Ordering::Greater
        } else {
            Ordering::Less
        }
    }
}

pub type V3<S> = [S; 3];

fn sub<S: Scalar>(a: &V3<S>, b: &V3<S>) -> V3<S> {
    [a[0].clone() - b[0].clone(), a[1].clone() - b[1].clone(), a[2].clone() - b[2].clone()]
}

fn dot<S: Scalar>(a: &V3<S>, b: &V3<S>) -> S {
    a[0].clone() * b[0].clone() + a[1].clone() * b[1].clone() + a[2].clone() * b[2].clone()
}

fn cross<S: Scalar>(a: &V3<S>, b: &V3<S>) -> V3<S> {
    [
        a[1].clone() * b[2].clone() - a[2].clone() * b[1].clone(),
        a[2].clone() * b[0].clone() - a[0].clone() * b[2].clone(),
        a[0].clone() * b[1].clone() - a[1].clone() * b[0].clone(),
    ]
}

/// Half-space `normal · x <= offset`.
#[derive(Debug, Clone)]
pub struct HalfSpace<S> {
    pub normal: V3<S>,
    pub offset: S,
}

impl<S: Scalar> HalfSpace<S> {
    fn eval(&self, p: &V3<S>) -> S {
        dot(&self.normal, p) - self.offset.clone()
    }

    /// Points closer to `a` than to `b`.
    pub fn bisector(a: &V3<S>, b: &V3<S>) -> Self {
        let two = S::from_f64(2.0);
        HalfSpace {
            normal: sub(b, a),
            offset: (dot(b, b) - dot(a, a)) / two,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Face<S> {
    pub label: usize,
    /// Outward normal (not normalized).
    pub normal: V3<S>,
    pub verts: Vec<V3<S>>,
}

#[derive(Debug, Clone)]
pub struct Polytope<S> {
    pub faces: Vec<Face<S>>,
}

/// Label carried by the six faces of the starting box.
pub const SEED_LABEL: usize = usize::MAX;

impl<S: Scalar> Polytope<S> {
    pub fn cuboid(min: V3<S>, max: V3<S>) -> Self {
        let corner = |i: usize| -> V3<S> {
            [
                if i & 1 == 0 { min[0].clone() } else { max[0].clone() },
                if i & 2 == 0 { min[1].clone() } else { max[1].clone() },
                if i & 4 == 0 { min[2].clone() } else { max[2].clone() },
            ]
        };
        let unit = |axis: usize, s: f64| -> V3<S> {
            let mut n = [S::zero(), S::zero(), S::zero()];
            n[axis] = S::from_f64(s);
            n
        };
        // corner index bits: x=1, y=2, z=4; counterclockwise seen from outside
        let quads: [([usize; 4], usize, f64); 6] = [
            ([0, 4, 6, 2], 0, -1.0),
            ([1, 3, 7, 5], 0, 1.0),
            ([0, 1, 5, 4], 1, -1.0),
            ([2, 6, 7, 3], 1, 1.0),
            ([0, 2, 3, 1], 2, -1.0),
            ([4, 5, 7, 6], 2, 1.0),
        ];
        Polytope {
            faces: quads
                .iter()
                .map(|(q, axis, s)| Face {
                    label: SEED_LABEL,
                    normal: unit(*axis, *s),
                    verts: q.iter().map(|&i| corner(i)).collect(),
                })
                .collect(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.faces.is_empty()
    }

    pub fn vertices(&self) -> impl Iterator<Item = &V3<S>> {
        self.faces.iter().flat_map(|f| f.verts.iter())
    }

    /// Keep the part with `h.normal · x <= h.offset`; the new face gets `label`.
    pub fn clip(&mut self, h: &HalfSpace<S>, label: usize) {
        let mut on_plane: Vec<V3<S>> = Vec::new();
        let mut faces = Vec::with_capacity(self.faces.len() + 1);
        let mut any_outside = false;
        for face in self.faces.drain(..) {
            let d: Vec<S> = face.verts.iter().map(|v| h.eval(v)).collect();
            if d.iter().all(|x| x.sign() != Ordering::Greater) {
                for (v, x) in face.verts.iter().zip(&d) {
                    if x.sign() == Ordering::Equal {
                        on_plane.push(v.clone());
                    }
                }
                faces.push(face);
                continue;
            }
            any_outside = true;
            let n = face.verts.len();
            let mut out = Vec::with_capacity(n + 1);
            for i in 0..n {
                let (u, du) = (&face.verts[i], &d[i]);
                let (v, dv) = (&face.verts[(i + 1) % n], &d[(i + 1) % n]);
                if du.sign() != Ordering::Greater {
                    out.push(u.clone());
                    if du.sign() == Ordering::Equal {
                        on_plane.push(u.clone());
                    }
                }
                let crosses = (du.sign() == Ordering::Less && dv.sign() == Ordering::Greater)
                    || (du.sign() == Ordering::Greater && dv.sign() == Ordering::Less);
                if crosses {
                    let x = intersect(u, du, v, dv);
                    on_plane.push(x.clone());
                    out.push(x);
                }
            }
            if out.len() >= 3 {
                faces.push(Face { verts: out, ..face });
            }
        }
        self.faces = faces;
        if !any_outside {
            return;
        }
        let cap = convex_order(on_plane, &h.normal);
        if cap.len() >= 3 {
            self.faces.push(Face {
                label,
                normal: h.normal.clone(),
                verts: cap,
            });
        }
        if self.faces.len() < 4 {
            self.faces.clear();
        }
    }

    /// Volume by pyramids from `apex`, which must lie inside.
    pub fn volume_from(&self, apex: &V3<S>) -> S {
        let six = S::from_f64(6.0);
        let mut total = S::zero();
        for f in &self.faces {
            let v0 = &f.verts[0];
            for w in f.verts[1..].windows(2) {
                let det = dot(&sub(v0, apex), &cross(&sub(&w[0], apex), &sub(&w[1], apex)));
                total = total + if det.sign() == Ordering::Less { -det } else { det };
            }
        }
        total / six
    }
}

/// Intersection of segment `u v` with the plane, computed from the
/// lexicographically smaller endpoint so both faces sharing the edge get the
/// identical point.
fn intersect<S: Scalar>(u: &V3<S>, du: &S, v: &V3<S>, dv: &S) -> V3<S> {
    let swap = lex_cmp(u, v) == Ordering::Greater;
    let (u, du, v, dv) = if swap { (v, dv, u, du) } else { (u, du, v, dv) };
    let t = du.clone() / (du.clone() - dv.clone());
    let d = sub(v, u);
    [
        u[0].clone() + t.clone() * d[0].clone(),
        u[1].clone() + t.clone() * d[1].clone(),
        u[2].clone() + t * d[2].clone(),
    ]
}

fn lex_cmp<S: Scalar>(a: &V3<S>, b: &V3<S>) -> Ordering {
    for k in 0..3 {
        match a[k].partial_cmp(&b[k]) {
            Some(Ordering::Equal) | None => continue,
            Some(o) => return o,
        }
    }
    Ordering::Equal
}

/// Deduplicate coplanar points and order them counterclockwise about `normal`.
fn convex_order<S: Scalar>(mut pts: Vec<V3<S>>, normal: &V3<S>) -> Vec<V3<S>> {
    pts.sort_by(lex_cmp);
    pts.dedup_by(|a, b| lex_cmp(a, b) == Ordering::Equal);
    if pts.len() < 3 {
        return pts;
    }
    let n = S::from_f64(pts.len() as f64);
    let mut c = [S::zero(), S::zero(), S::zero()];
    for p in &pts {
        for k in 0..3 {
            c[k] = c[k].clone() + p[k].clone();
        }
    }
    let c = c.map(|v| v / n.clone());
    let r = sub(&pts[0], &c);
    let half = |a: &V3<S>| -> u8 {
        let s = dot(&cross(&r, a), normal).sign();
        if s == Ordering::Greater || (s == Ordering::Equal && dot(&r, a).sign() != Ordering::Less) {
            0
        } else {
            1
        }
    };
    pts.sort_by(|p, q| {
        let (a, b) = (sub(p, &c), sub(q, &c));
        half(&a)
            .cmp(&half(&b))
            .then_with(|| dot(&cross(&a, &b), normal).sign().reverse())
    });
    pts
}
