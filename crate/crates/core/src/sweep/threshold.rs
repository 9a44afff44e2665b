use crate::geometry::{BoundingBox, Circumsphere};

/// Largest sweep coordinate of `box ∩ ball`, or `-inf` when they do not meet.
///
/// Once the sweep has passed this value no future site (all of which lie in
/// the box) can fall inside the sphere.
pub fn offline_threshold(c: &Circumsphere, b: &BoundingBox) -> f64 {
    let y = c.center.y.clamp(b.min.y, b.max.y);
    let z = c.center.z.clamp(b.min.z, b.max.z);
    let s2 = (c.center.y - y).powi(2) + (c.center.z - z).powi(2);
    if s2 > c.radius_sq {
        return f64::NEG_INFINITY;
    }
    let half = (c.radius_sq - s2).sqrt();
    let (lo, hi) = (c.center.x - half, c.center.x + half);
    if hi < b.min.x || lo > b.max.x {
        return f64::NEG_INFINITY;
    }
    hi.min(b.max.x)
}

/// The basic condition: rightmost point of the sphere.
pub fn naive_threshold(c: &Circumsphere) -> f64 {
    c.center.x + c.radius
}
