use crate::geometry::BoundingBox;

/// Static grid over the (y, z) extent of the bounding box. Each cell keeps a
/// hint to a recently created tetrahedron near that location; hints go stale
/// when the tetrahedron dies and are validated by the caller on lookup.
#[derive(Debug, Clone)]
pub struct SweepGrid {
    res: usize,
    y0: f64,
    z0: f64,
    inv_dy: f64,
    inv_dz: f64,
    cells: Vec<Option<(u32, u32)>>,
}

impl SweepGrid {
    pub fn new(bbox: &BoundingBox, res: usize) -> Self {
        let res = res.max(1);
        let ext = bbox.extent();
        let inv = |e: f64| if e > 0.0 { res as f64 / e } else { 0.0 };
        SweepGrid {
            res,
            y0: bbox.min.y,
            z0: bbox.min.z,
            inv_dy: inv(ext.y),
            inv_dz: inv(ext.z),
            cells: vec![None; res * res],
        }
    }

    /// Resolution for a given count of sites expected near the sweep plane.
    pub fn resolution_for(expected_online_sites: f64) -> usize {
        (expected_online_sites.max(1.0).sqrt().ceil() as usize).clamp(1, 4096)
    }

    pub fn resolution(&self) -> usize {
        self.res
    }

    pub fn byte_size(&self) -> usize {
        self.cells.len() * std::mem::size_of::<Option<(u32, u32)>>()
    }

    fn axis(&self, v: f64, v0: f64, inv: f64) -> usize {
        let i = ((v - v0) * inv).floor();
        if i.is_nan() || i < 0.0 {
            0
        } else {
            (i as usize).min(self.res - 1)
        }
    }

    pub fn cell_of(&self, y: f64, z: f64) -> (usize, usize) {
        (self.axis(y, self.y0, self.inv_dy), self.axis(z, self.z0, self.inv_dz))
    }

    pub fn set(&mut self, y: f64, z: f64, tet: u32, generation: u32) {
        let (i, j) = self.cell_of(y, z);
        self.cells[i * self.res + j] = Some((tet, generation));
    }

    /// First hint accepted by `valid`, searching rings of growing radius
    /// around the cell containing (y, z). Stale hints met on the way are
    /// cleared.
    pub fn lookup(&mut self, y: f64, z: f64, mut valid: impl FnMut(u32, u32) -> bool) -> Option<u32> {
        let (ci, cj) = self.cell_of(y, z);
        let res = self.res as isize;
        for ring in 0..res {
            let mut found = None;
            let (ci, cj) = (ci as isize, cj as isize);
            for di in -ring..=ring {
                for dj in -ring..=ring {
                    if di.abs() != ring && dj.abs() != ring {
                        continue;
                    }
                    let (i, j) = (ci + di, cj + dj);
                    if i < 0 || j < 0 || i >= res || j >= res {
                        continue;
                    }
                    let k = (i * res + j) as usize;
                    if let Some((t, g)) = self.cells[k] {
                        if valid(t, g) {
                            found = Some(t);
                            break;
                        }
                        self.cells[k] = None;
                    }
                }
                if found.is_some() {
                    break;
                }
            }
            if found.is_some() {
                return found;
            }
        }
        None
    }
}
