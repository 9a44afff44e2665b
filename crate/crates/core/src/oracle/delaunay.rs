use std::collections::{BTreeSet, HashMap};

use crate::geometry::{insphere_perturbed, orient3d, Point3, Ranked, Sign};

use super::OracleError;

pub const DELAUNAY_LIMIT: usize = 2_000;
pub const EXHAUSTIVE_LIMIT: usize = 40;

const FACES: [[usize; 3]; 4] = [[1, 3, 2], [0, 2, 3], [0, 3, 1], [0, 1, 2]];

fn ranked(points: &[Point3], i: usize) -> Ranked<'_> {
    Ranked {
        p: &points[i],
        rank: i as u64,
    }
}

/// Positively oriented copy of `t`, or `None` when flat.
fn oriented(points: &[Point3], mut t: [usize; 4]) -> Option<[usize; 4]> {
    match orient3d(&points[t[0]], &points[t[1]], &points[t[2]], &points[t[3]]) {
        Sign::Zero => None,
        Sign::Positive => Some(t),
        Sign::Negative => {
            t.swap(0, 1);
            Some(t)
        }
    }
}

/// True when no other point lies inside the (perturbed) circumsphere of `t`.
/// Ranks are list positions.
pub fn is_empty_sphere(points: &[Point3], t: [usize; 4]) -> bool {
    let Some(t) = oriented(points, t) else {
        return false;
    };
    let tet = t.map(|i| ranked(points, i));
    (0..points.len())
        .filter(|i| !t.contains(i))
        .all(|i| insphere_perturbed(tet, ranked(points, i)) != Sign::Positive)
}

fn sorted(mut t: [usize; 4]) -> [usize; 4] {
    t.sort_unstable();
    t
}

fn check_input(points: &[Point3], limit: usize) -> Result<(), OracleError> {
    if points.len() > limit {
        return Err(OracleError::SizeLimit {
            n: points.len(),
            limit,
        });
    }
    let mut seen = HashMap::new();
    for (i, p) in points.iter().enumerate() {
        if !p.is_finite() {
            return Err(OracleError::NonFinite(i));
        }
        let key = p.to_array().map(f64::to_bits);
        if let Some(j) = seen.insert(key, i) {
            return Err(OracleError::DuplicatePoint(j, i));
        }
    }
    Ok(())
}

/// Every 4-subset that is non-flat with an empty circumsphere. O(n^5).
pub fn delaunay_exhaustive(points: &[Point3]) -> Result<BTreeSet<[usize; 4]>, OracleError> {
    check_input(points, EXHAUSTIVE_LIMIT)?;
    let n = points.len();
    let mut out = BTreeSet::new();
    for a in 0..n {
        for b in a + 1..n {
            for c in b + 1..n {
                for d in c + 1..n {
                    if is_empty_sphere(points, [a, b, c, d]) {
                        out.insert([a, b, c, d]);
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Delaunay tetrahedra as sorted index 4-tuples, with ties broken by the
/// same rank-ordered perturbation as the sweep kernel (rank = index).
///
/// Tetrahedra are discovered by gift-wrapping across faces (for each open
/// face, the point beyond it whose sphere with the face contains no other
/// candidate), then every one is re-checked against every point.
pub fn delaunay_oracle(points: &[Point3]) -> Result<BTreeSet<[usize; 4]>, OracleError> {
    check_input(points, DELAUNAY_LIMIT)?;
    if points.len() <= 8 {
        return delaunay_exhaustive(points);
    }
    let Some(first) = first_tetrahedron(points) else {
        return Ok(BTreeSet::new());
    };
    let mut tets = BTreeSet::new();
    let mut open: HashMap<[usize; 3], [usize; 3]> = HashMap::new();
    let mut stack: Vec<[usize; 3]> = Vec::new();
    let mut add = |t: [usize; 4], open: &mut HashMap<[usize; 3], [usize; 3]>, stack: &mut Vec<[usize; 3]>| {
        if !tets.insert(sorted(t)) {
            return;
        }
        for f in FACES {
            let face = [t[f[0]], t[f[1]], t[f[2]]];
            let mut key = face;
            key.sort_unstable();
            if open.remove(&key).is_none() {
                open.insert(key, face);
                stack.push(key);
            }
        }
    };
    add(first, &mut open, &mut stack);
    while let Some(key) = stack.pop() {
        let Some(face) = open.get(&key).copied() else {
            continue;
        };
        // the known tetrahedron is on the positive side; look beyond
        let [a, b, c] = face;
        let mut best: Option<usize> = None;
        for e in 0..points.len() {
            if e == a || e == b || e == c {
                continue;
            }
            if orient3d(&points[a], &points[b], &points[c], &points[e]) != Sign::Negative {
                continue;
            }
            best = match best {
                None => Some(e),
                Some(d) => {
                    let tet = [a, c, b, d].map(|i| ranked(points, i));
                    if insphere_perturbed(tet, ranked(points, e)) == Sign::Positive {
                        Some(e)
                    } else {
                        Some(d)
                    }
                }
            };
        }
        match best {
            Some(d) => add([a, c, b, d], &mut open, &mut stack),
            None => {
                // convex hull face
                open.remove(&key);
            }
        }
    }
    for t in &tets {
        if !is_empty_sphere(points, *t) {
            return Err(OracleError::Inconsistent(format!("tetrahedron {t:?} is not empty")));
        }
    }
    Ok(tets)
}

/// A Delaunay tetrahedron incident to the lexicographically smallest point,
/// searched among its nearest neighbours.
fn first_tetrahedron(points: &[Point3]) -> Option<[usize; 4]> {
    let n = points.len();
    let a = (0..n).min_by(|&i, &j| points[i].lex_cmp(&points[j]))?;
    let mut near: Vec<usize> = (0..n).filter(|&i| i != a).collect();
    near.sort_by(|&i, &j| {
        points[i]
            .dist_sq(&points[a])
            .total_cmp(&points[j].dist_sq(&points[a]))
            .then(i.cmp(&j))
    });
    let mut k = 12.min(near.len());
    loop {
        for i in 0..k {
            for j in i + 1..k {
                for l in j + 1..k {
                    // only subsets that use the newly admitted neighbours
                    if k > 12 && l < k / 2 {
                        continue;
                    }
                    if let Some(t) = oriented(points, [a, near[i], near[j], near[l]]) {
                        if is_empty_sphere(points, t) {
                            return Some(t);
                        }
                    }
                }
            }
        }
        if k == near.len() {
            return None;
        }
        k = (k * 2).min(near.len());
    }
}
