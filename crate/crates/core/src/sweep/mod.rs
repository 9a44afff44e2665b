//! Plane-sweep incremental Delaunay kernel.
//!
//! Sites arrive sorted by their sweep (x) coordinate. Each insertion locates a
//! conflicting tetrahedron through the (y, z) grid and a visibility walk,
//! carves out the cavity of tetrahedra whose circumspheres contain the new
//! site and refills it with the star of the site. Tetrahedra whose offline
//! threshold falls behind the sweep are evicted to a sink, and a site whose
//! last online tetrahedron has been evicted is finalized with its complete
//! neighbourhood.

mod grid;
mod threshold;

use std::cmp::{Ordering, Reverse};
use std::collections::{BinaryHeap, HashMap};

use log::warn;
use thiserror::Error;

pub use grid::SweepGrid;
pub use threshold::{naive_threshold, offline_threshold};

use crate::extsort::SiteRecord;
use crate::geometry::{
    circumsphere, insphere_perturbed, orient3d, BoundingBox, Circumsphere, GeometryError, Point3,
    Ranked, Sign,
};
use crate::voronoi::{FinalizedSite, IncidentTet};

/// Neighbour slot value for the outside of the super-simplex.
pub const BOUNDARY: u32 = u32::MAX;
/// Neighbour slot value for a tetrahedron that has been evicted and freed.
pub const OFFLINE: u32 = u32::MAX - 1;

const GHOSTS: u32 = 4;

/// Face opposite vertex `i`, ordered so that vertex `i` sees it counterclockwise.
const FACES: [[usize; 3]; 4] = [[1, 3, 2], [0, 2, 3], [0, 3, 1], [0, 1, 2]];

#[derive(Debug, Error)]
pub enum SweepError {
    #[error("degenerate bounding box {0:?}")]
    DegenerateBox(BoundingBox),
    #[error("unsorted input: site {id} at x={x} arrived after sweep position {sweep}")]
    Unsorted { id: u32, x: f64, sweep: f64 },
    #[error("site {id} has non-finite coordinates")]
    NonFinite { id: u32 },
    #[error("site id {id} appears twice")]
    DuplicateId { id: u32 },
    #[error("site {id} lies outside the bounding box")]
    OutsideBox { id: u32 },
    #[error("point location failed for site {id}: no online tetrahedron conflicts with it")]
    LookupFailure { id: u32 },
    #[error("site {id} conflicts with an offlined tetrahedron")]
    OfflineConflict { id: u32 },
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("downstream sink failed: {0}")]
    Sink(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum OffliningMode {
    /// Box-clipped threshold x(B, C).
    Improved,
    /// Rightmost point of the circumsphere.
    Naive,
    /// Keep everything online until the end of the stream.
    Off,
}

impl std::str::FromStr for OffliningMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "improved" => Ok(OffliningMode::Improved),
            "naive" => Ok(OffliningMode::Naive),
            "off" => Ok(OffliningMode::Off),
            _ => Err(format!("unknown offlining mode '{s}' (improved|naive|off)")),
        }
    }
}

impl std::fmt::Display for OffliningMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            OffliningMode::Improved => "improved",
            OffliningMode::Naive => "naive",
            OffliningMode::Off => "off",
        })
    }
}

#[derive(Debug, Clone)]
pub struct KernelConfig {
    pub offlining: OffliningMode,
    /// Run an eviction pass every this many insertions.
    pub eviction_cadence: usize,
    /// Grid cells per axis; derived from `expected_sites` when `None`.
    pub grid_resolution: Option<usize>,
    pub expected_sites: u64,
    /// Ghost vertices sit at this multiple of the box diameter.
    pub ghost_scale: f64,
    /// Keep offlined tetrahedra linked and fail if a later cavity would
    /// need one of them.
    pub audit: bool,
}

impl Default for KernelConfig {
    fn default() -> Self {
        KernelConfig {
            offlining: OffliningMode::Improved,
            eviction_cadence: 1024,
            grid_resolution: None,
            expected_sites: 0,
            ghost_scale: 1.0e6,
            audit: false,
        }
    }
}

/// A real tetrahedron leaving the frontier.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OfflineTet {
    pub ids: [u32; 4],
    pub circumcenter: Point3,
}

/// Consumer of kernel output. Each tetrahedron and each site is delivered
/// exactly once.
pub trait OfflineSink {
    fn tetrahedron(&mut self, tet: &OfflineTet) -> Result<(), SweepError>;
    fn site(&mut self, site: FinalizedSite) -> Result<(), SweepError>;
}

/// Sink that keeps everything in memory; handy for tests and small runs.
#[derive(Debug, Default)]
pub struct CollectSink {
    pub tets: Vec<OfflineTet>,
    pub sites: Vec<FinalizedSite>,
}

impl OfflineSink for CollectSink {
    fn tetrahedron(&mut self, tet: &OfflineTet) -> Result<(), SweepError> {
        self.tets.push(*tet);
        Ok(())
    }
    fn site(&mut self, site: FinalizedSite) -> Result<(), SweepError> {
        self.sites.push(site);
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TetId(pub u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum TetState {
    Free,
    Online,
    Offlined,
}

#[derive(Debug, Clone)]
struct Tet {
    v: [u32; 4],
    n: [u32; 4],
    sphere: Circumsphere,
    threshold: f64,
    generation: u32,
    state: TetState,
    visit: u32,
    in_cavity: bool,
}

#[derive(Debug, Clone)]
struct SiteSlot {
    pos: Point3,
    id: u32,
    rank: u64,
    incident_online: u32,
    hull: bool,
    incident: Vec<IncidentTet>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct QueueEntry {
    threshold: f64,
    tet: u32,
    generation: u32,
}

impl Eq for QueueEntry {}

impl Ord for QueueEntry {
    fn cmp(&self, o: &Self) -> Ordering {
        self.threshold
            .total_cmp(&o.threshold)
            .then(self.tet.cmp(&o.tet))
            .then(self.generation.cmp(&o.generation))
    }
}

impl PartialOrd for QueueEntry {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}

/// A face of the cavity: face `face` of cavity member `tet`, with whatever
/// lies on the other side.
#[derive(Debug, Clone, Copy)]
pub struct BoundaryFace {
    pub tet: TetId,
    pub face: u8,
    pub outside: u32,
}

#[derive(Debug, Clone, Default)]
pub struct Cavity {
    pub tets: Vec<TetId>,
    pub boundary: Vec<BoundaryFace>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InsertOutcome {
    Inserted,
    Duplicate,
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct KernelStats {
    pub sites_inserted: u64,
    pub duplicates: u64,
    pub sweep_x: f64,
    pub online_tetrahedra: u64,
    pub peak_online_tetrahedra: u64,
    pub created_total: u64,
    pub destroyed_total: u64,
    pub evicted_total: u64,
    pub real_tetrahedra_emitted: u64,
    pub sites_finalized: u64,
    pub resident_bytes: u64,
    pub peak_resident_bytes: u64,
    pub walk_steps: u64,
    pub walk_fallbacks: u64,
}

/// The online part of the tessellation plus everything needed to evict it.
pub struct Frontier {
    cfg: KernelConfig,
    bbox: BoundingBox,
    guard: f64,
    tets: Vec<Tet>,
    free_tets: Vec<u32>,
    sites: Vec<SiteSlot>,
    free_sites: Vec<u32>,
    live: HashMap<u32, u32>,
    queue: BinaryHeap<Reverse<QueueEntry>>,
    grid: SweepGrid,
    sweep_x: f64,
    next_rank: u64,
    last_point: Option<Point3>,
    last_created: u32,
    epoch: u32,
    finalize_seq: u64,
    incident_entries: u64,
    stats: KernelStats,
    rng: u64,
    // scratch
    stack: Vec<u32>,
    edge_map: HashMap<(u32, u32), (u32, u8)>,
}

impl Frontier {
    /// Build the super-simplex around `bbox`: four ghost vertices of a
    /// regular tetrahedron whose inscribed sphere contains the box with a
    /// wide margin.
    pub fn bootstrap(bbox: BoundingBox, cfg: KernelConfig) -> Result<Self, SweepError> {
        if bbox.is_empty() || !bbox.min.is_finite() || !bbox.max.is_finite() {
            return Err(SweepError::DegenerateBox(bbox));
        }
        let diam = bbox.diameter();
        let scale = if diam > 0.0 {
            diam
        } else {
            bbox.center().norm().max(1.0)
        };
        let guard = 1e-9 * scale;
        let c = bbox.center();
        let l = cfg.ghost_scale.max(100.0) * scale;
        let dirs = [
            Point3::new(1.0, 1.0, 1.0),
            Point3::new(1.0, -1.0, -1.0),
            Point3::new(-1.0, 1.0, -1.0),
            Point3::new(-1.0, -1.0, 1.0),
        ];
        let mut ghost_pos: Vec<Point3> = dirs.iter().map(|d| c + *d * l).collect();
        if orient3d(&ghost_pos[0], &ghost_pos[1], &ghost_pos[2], &ghost_pos[3]) != Sign::Positive {
            ghost_pos.swap(0, 1);
        }
        let sites = ghost_pos
            .iter()
            .enumerate()
            .map(|(i, p)| SiteSlot {
                pos: *p,
                id: u32::MAX - i as u32,
                rank: i as u64,
                incident_online: 1,
                hull: false,
                incident: Vec::new(),
            })
            .collect();
        let res = cfg
            .grid_resolution
            .unwrap_or_else(|| SweepGrid::resolution_for(expected_layer_sites(&bbox, cfg.expected_sites)));
        let mut f = Frontier {
            grid: SweepGrid::new(&bbox, res),
            cfg,
            bbox,
            guard,
            tets: Vec::new(),
            free_tets: Vec::new(),
            sites,
            free_sites: Vec::new(),
            live: HashMap::new(),
            queue: BinaryHeap::new(),
            sweep_x: f64::NEG_INFINITY,
            next_rank: GHOSTS as u64,
            last_point: None,
            last_created: 0,
            epoch: 0,
            finalize_seq: 0,
            incident_entries: 0,
            stats: KernelStats {
                sweep_x: f64::NEG_INFINITY,
                ..KernelStats::default()
            },
            rng: 0x9E37_79B9_7F4A_7C15,
            stack: Vec::new(),
            edge_map: HashMap::new(),
        };
        let sphere = circumsphere(&ghost_pos[0], &ghost_pos[1], &ghost_pos[2], &ghost_pos[3])?;
        let t = f.alloc_tet([0, 1, 2, 3], sphere, f64::INFINITY);
        f.last_created = t;
        f.update_resident();
        Ok(f)
    }

    pub fn config(&self) -> &KernelConfig {
        &self.cfg
    }

    pub fn bbox(&self) -> &BoundingBox {
        &self.bbox
    }

    pub fn sweep_position(&self) -> f64 {
        self.sweep_x
    }

    pub fn grid_resolution(&self) -> usize {
        self.grid.resolution()
    }

    pub fn stats(&self) -> KernelStats {
        self.stats
    }

    pub fn ghost_positions(&self) -> [Point3; 4] {
        [self.sites[0].pos, self.sites[1].pos, self.sites[2].pos, self.sites[3].pos]
    }

    pub fn online_count(&self) -> usize {
        self.stats.online_tetrahedra as usize
    }

    /// Eviction slack below the sweep position.
    pub fn guard(&self) -> f64 {
        self.guard
    }

    /// Smallest offline threshold among online tetrahedra.
    pub fn min_online_threshold(&self) -> f64 {
        self.tets
            .iter()
            .filter(|t| t.state == TetState::Online)
            .map(|t| t.threshold)
            .fold(f64::INFINITY, f64::min)
    }

    fn alloc_tet(&mut self, v: [u32; 4], sphere: Circumsphere, threshold: f64) -> u32 {
        let tet = Tet {
            v,
            n: [BOUNDARY; 4],
            sphere,
            threshold,
            generation: 0,
            state: TetState::Online,
            visit: 0,
            in_cavity: false,
        };
        let idx = match self.free_tets.pop() {
            Some(i) => {
                let g = self.tets[i as usize].generation;
                self.tets[i as usize] = Tet { generation: g, ..tet };
                i
            }
            None => {
                self.tets.push(tet);
                (self.tets.len() - 1) as u32
            }
        };
        self.queue.push(Reverse(QueueEntry {
            threshold,
            tet: idx,
            generation: self.tets[idx as usize].generation,
        }));
        self.stats.created_total += 1;
        self.stats.online_tetrahedra += 1;
        self.stats.peak_online_tetrahedra =
            self.stats.peak_online_tetrahedra.max(self.stats.online_tetrahedra);
        idx
    }

    fn release_tet(&mut self, t: u32) {
        let tet = &mut self.tets[t as usize];
        tet.state = TetState::Free;
        tet.generation = tet.generation.wrapping_add(1);
        self.free_tets.push(t);
    }

    fn is_online(&self, t: u32) -> bool {
        (t as usize) < self.tets.len() && self.tets[t as usize].state == TetState::Online
    }

    fn is_ghost_tet(&self, t: &Tet) -> bool {
        t.v.iter().any(|&v| v < GHOSTS)
    }

    fn ranked(&self, slot: u32) -> Ranked<'_> {
        let s = &self.sites[slot as usize];
        Ranked { p: &s.pos, rank: s.rank }
    }

    fn conflicts(&self, t: u32, p: &Point3, rank: u64) -> bool {
        let v = self.tets[t as usize].v;
        let tet = [self.ranked(v[0]), self.ranked(v[1]), self.ranked(v[2]), self.ranked(v[3])];
        insphere_perturbed(tet, Ranked { p, rank }) == Sign::Positive
    }

    fn face_orient(&self, t: u32, face: usize, p: &Point3) -> Sign {
        let v = self.tets[t as usize].v;
        let f = FACES[face];
        let pos = |i: usize| &self.sites[v[f[i]] as usize].pos;
        orient3d(pos(0), pos(1), pos(2), p)
    }

    fn next_rand(&mut self) -> u64 {
        // xorshift64*
        let mut x = self.rng;
        x ^= x >> 12;
        x ^= x << 25;
        x ^= x >> 27;
        self.rng = x;
        x.wrapping_mul(0x2545_F491_4F6C_DD1D)
    }

    fn threshold_for(&self, v: &[u32; 4], sphere: &Circumsphere) -> f64 {
        if v.iter().any(|&s| s < GHOSTS) {
            return f64::INFINITY;
        }
        let t = match self.cfg.offlining {
            OffliningMode::Improved => offline_threshold(sphere, &self.bbox),
            OffliningMode::Naive => naive_threshold(sphere),
            OffliningMode::Off => return f64::INFINITY,
        };
        // never earlier than the tetrahedron's own vertices
        let vmax = v
            .iter()
            .map(|&s| self.sites[s as usize].pos.x)
            .fold(f64::NEG_INFINITY, f64::max);
        t.max(vmax)
    }

    /// Find an online tetrahedron whose circumsphere contains `p`.
    pub fn locate_seed(&mut self, p: &Point3) -> Result<TetId, SweepError> {
        let rank = self.next_rank;
        let start = {
            let tets = &self.tets;
            self.grid.lookup(p.y, p.z, |t, g| {
                let tet = &tets[t as usize];
                tet.state == TetState::Online && tet.generation == g
            })
        };
        let start = match start {
            Some(t) => t,
            None if self.is_online(self.last_created) => self.last_created,
            None => match self.any_online() {
                Some(t) => t,
                None => return Err(SweepError::LookupFailure { id: u32::MAX }),
            },
        };
        if let Some(t) = self.walk(start, p, rank) {
            return Ok(TetId(t));
        }
        self.stats.walk_fallbacks += 1;
        // The walk was blocked by the offline region; fall back to a scan.
        for t in 0..self.tets.len() as u32 {
            if self.is_online(t) && self.conflicts(t, p, rank) {
                return Ok(TetId(t));
            }
        }
        Err(SweepError::LookupFailure { id: u32::MAX })
    }

    fn any_online(&self) -> Option<u32> {
        (0..self.tets.len() as u32).find(|&t| self.is_online(t))
    }

    /// Remembering visibility walk towards `p`; stops at the first
    /// tetrahedron in conflict with `p`. `None` when blocked.
    fn walk(&mut self, start: u32, p: &Point3, rank: u64) -> Option<u32> {
        let mut t = start;
        let mut prev = BOUNDARY;
        let cap = self.stats.online_tetrahedra + 4;
        let mut steps = 0u64;
        loop {
            if self.conflicts(t, p, rank) {
                self.stats.walk_steps += steps;
                return Some(t);
            }
            steps += 1;
            if steps > cap {
                self.stats.walk_steps += steps;
                return None;
            }
            let first = (self.next_rand() % 4) as usize;
            let mut next = None;
            for k in 0..4 {
                let i = (first + k) % 4;
                let nb = self.tets[t as usize].n[i];
                if nb == prev {
                    continue;
                }
                if self.face_orient(t, i, p) == Sign::Negative && self.is_online(nb) {
                    next = Some(nb);
                    break;
                }
            }
            match next {
                Some(nb) => {
                    prev = t;
                    t = nb;
                }
                None => {
                    self.stats.walk_steps += steps;
                    return None;
                }
            }
        }
    }

    /// The connected set of online tetrahedra in conflict with `p`, grown
    /// from `seed`, and the faces bounding it.
    pub fn grow_cavity(&mut self, seed: TetId, p: &Point3) -> Result<Cavity, SweepError> {
        let mut cavity = Cavity::default();
        self.grow_cavity_into(seed.0, p, self.next_rank, &mut cavity)?;
        Ok(cavity)
    }

    fn grow_cavity_into(
        &mut self,
        seed: u32,
        p: &Point3,
        rank: u64,
        cavity: &mut Cavity,
    ) -> Result<(), SweepError> {
        self.epoch = self.epoch.wrapping_add(1);
        if self.epoch == 0 {
            for t in self.tets.iter_mut() {
                t.visit = 0;
            }
            self.epoch = 1;
        }
        let epoch = self.epoch;
        cavity.tets.clear();
        cavity.boundary.clear();
        let mut stack = std::mem::take(&mut self.stack);
        stack.clear();
        {
            let s = &mut self.tets[seed as usize];
            s.visit = epoch;
            s.in_cavity = true;
        }
        stack.push(seed);
        let mut result = Ok(());
        while let Some(t) = stack.pop() {
            cavity.tets.push(TetId(t));
            for i in 0..4 {
                let nb = self.tets[t as usize].n[i];
                let face = BoundaryFace {
                    tet: TetId(t),
                    face: i as u8,
                    outside: nb,
                };
                if nb == BOUNDARY || nb == OFFLINE {
                    cavity.boundary.push(face);
                    continue;
                }
                let state = self.tets[nb as usize].state;
                if state == TetState::Offlined {
                    if self.conflicts(nb, p, rank) {
                        result = Err(SweepError::OfflineConflict { id: u32::MAX });
                    }
                    cavity.boundary.push(face);
                    continue;
                }
                if self.tets[nb as usize].visit == epoch {
                    if !self.tets[nb as usize].in_cavity {
                        cavity.boundary.push(face);
                    }
                    continue;
                }
                let inside = self.conflicts(nb, p, rank);
                let n = &mut self.tets[nb as usize];
                n.visit = epoch;
                n.in_cavity = inside;
                if inside {
                    stack.push(nb);
                } else {
                    cavity.boundary.push(face);
                }
            }
        }
        self.stack = stack;
        result
    }

    /// Fill the cavity with the star of the new site and retire the cavity.
    pub fn retriangulate(
        &mut self,
        cavity: &Cavity,
        site: &SiteRecord,
    ) -> Result<Vec<TetId>, SweepError> {
        let slot = self.alloc_site(site);
        let mut created = Vec::with_capacity(cavity.boundary.len());
        self.retriangulate_into(cavity, slot, &mut created)?;
        Ok(created.into_iter().map(TetId).collect())
    }

    fn alloc_site(&mut self, site: &SiteRecord) -> u32 {
        let slot = SiteSlot {
            pos: site.point(),
            id: site.id,
            rank: self.next_rank,
            incident_online: 0,
            hull: false,
            incident: Vec::new(),
        };
        self.next_rank += 1;
        let idx = match self.free_sites.pop() {
            Some(i) => {
                self.sites[i as usize] = slot;
                i
            }
            None => {
                self.sites.push(slot);
                (self.sites.len() - 1) as u32
            }
        };
        self.live.insert(site.id, idx);
        idx
    }

    fn retriangulate_into(
        &mut self,
        cavity: &Cavity,
        slot: u32,
        created: &mut Vec<u32>,
    ) -> Result<(), SweepError> {
        let p = self.sites[slot as usize].pos;
        let mut edge_map = std::mem::take(&mut self.edge_map);
        edge_map.clear();
        created.clear();
        for bf in &cavity.boundary {
            let old = &self.tets[bf.tet.0 as usize];
            let f = FACES[bf.face as usize];
            let v = [old.v[f[0]], old.v[f[1]], old.v[f[2]], slot];
            let pos = |s: u32| &self.sites[s as usize].pos;
            if orient3d(pos(v[0]), pos(v[1]), pos(v[2]), &p) != Sign::Positive {
                self.edge_map = edge_map;
                return Err(GeometryError::DegenerateSimplex.into());
            }
            let sphere = circumsphere(pos(v[0]), pos(v[1]), pos(v[2]), pos(v[3]))?;
            let threshold = self.threshold_for(&v, &sphere);
            let t = self.alloc_tet(v, sphere, threshold);
            self.tets[t as usize].n[3] = bf.outside;
            if bf.outside != BOUNDARY && bf.outside != OFFLINE {
                let out = &mut self.tets[bf.outside as usize];
                if let Some(j) = out.n.iter().position(|&x| x == bf.tet.0) {
                    out.n[j] = t;
                }
            }
            for i in 0..3 {
                let (a, b) = (v[(i + 1) % 3], v[(i + 2) % 3]);
                let key = if a < b { (a, b) } else { (b, a) };
                match edge_map.remove(&key) {
                    Some((other, j)) => {
                        self.tets[t as usize].n[i] = other;
                        self.tets[other as usize].n[j as usize] = t;
                    }
                    None => {
                        edge_map.insert(key, (t, i as u8));
                    }
                }
            }
            for &s in &v {
                self.sites[s as usize].incident_online += 1;
            }
            created.push(t);
        }
        debug_assert!(edge_map.is_empty(), "cavity boundary is not a closed surface");
        self.edge_map = edge_map;
        for &TetId(t) in &cavity.tets {
            let v = self.tets[t as usize].v;
            for s in v {
                self.sites[s as usize].incident_online -= 1;
            }
            self.tets[t as usize].in_cavity = false;
            self.release_tet(t);
            self.stats.destroyed_total += 1;
            self.stats.online_tetrahedra -= 1;
        }
        if let Some(&first) = created.first() {
            let g = self.tets[first as usize].generation;
            self.grid.set(p.y, p.z, first, g);
            self.last_created = first;
        }
        Ok(())
    }

    /// One full step: locate, carve, refill, advance the sweep and evict on
    /// the configured cadence.
    pub fn insert_site(
        &mut self,
        site: &SiteRecord,
        sink: &mut dyn OfflineSink,
    ) -> Result<InsertOutcome, SweepError> {
        let p = site.point();
        if !p.is_finite() {
            return Err(SweepError::NonFinite { id: site.id });
        }
        if p.x < self.sweep_x {
            return Err(SweepError::Unsorted {
                id: site.id,
                x: p.x,
                sweep: self.sweep_x,
            });
        }
        if !self.bbox.contains(&p) {
            return Err(SweepError::OutsideBox { id: site.id });
        }
        if self.live.contains_key(&site.id) {
            return Err(SweepError::DuplicateId { id: site.id });
        }
        if self.last_point == Some(p) {
            warn!("duplicate site {} at {} ignored", site.id, p);
            self.stats.duplicates += 1;
            return Ok(InsertOutcome::Duplicate);
        }
        let rank = self.next_rank;
        let with_id = |e: SweepError| match e {
            SweepError::LookupFailure { .. } => SweepError::LookupFailure { id: site.id },
            SweepError::OfflineConflict { .. } => SweepError::OfflineConflict { id: site.id },
            other => other,
        };
        let seed = match self.locate_seed(&p) {
            Ok(s) => s,
            Err(SweepError::LookupFailure { .. }) if self.coincides_with_online_vertex(&p) => {
                warn!("duplicate site {} at {} ignored", site.id, p);
                self.stats.duplicates += 1;
                return Ok(InsertOutcome::Duplicate);
            }
            Err(e) => return Err(with_id(e)),
        };
        let mut cavity = Cavity::default();
        self.grow_cavity_into(seed.0, &p, rank, &mut cavity).map_err(with_id)?;
        let slot = self.alloc_site(site);
        let mut created = Vec::with_capacity(cavity.boundary.len());
        self.retriangulate_into(&cavity, slot, &mut created)?;
        self.sweep_x = p.x;
        self.stats.sweep_x = p.x;
        self.last_point = Some(p);
        self.stats.sites_inserted += 1;
        if self.stats.sites_inserted % self.cfg.eviction_cadence.max(1) as u64 == 0 {
            self.evict(p.x, sink)?;
        } else {
            self.update_resident();
        }
        Ok(InsertOutcome::Inserted)
    }

    fn coincides_with_online_vertex(&self, p: &Point3) -> bool {
        self.tets.iter().any(|t| {
            t.state == TetState::Online && t.v.iter().any(|&s| self.sites[s as usize].pos == *p)
        })
    }

    /// Evict every online tetrahedron whose threshold is behind
    /// `sweep_x - guard`. Returns the number evicted.
    pub fn evict(&mut self, sweep_x: f64, sink: &mut dyn OfflineSink) -> Result<usize, SweepError> {
        let limit = if sweep_x == f64::INFINITY {
            f64::INFINITY
        } else {
            sweep_x - self.guard
        };
        let mut count = 0;
        while let Some(Reverse(top)) = self.queue.peek().copied() {
            let drain = limit == f64::INFINITY;
            if !drain && !(top.threshold < limit) {
                break;
            }
            self.queue.pop();
            let tet = &self.tets[top.tet as usize];
            if tet.state != TetState::Online || tet.generation != top.generation {
                continue;
            }
            self.offline(top.tet, sink)?;
            count += 1;
        }
        if self.queue.len() > 2 * self.stats.online_tetrahedra as usize + 1024 {
            self.compact_queue();
        }
        self.update_resident();
        Ok(count)
    }

    /// End of stream: evict everything and finalize every remaining site.
    pub fn finish(&mut self, sink: &mut dyn OfflineSink) -> Result<usize, SweepError> {
        let n = self.evict(f64::INFINITY, sink)?;
        self.sweep_x = f64::INFINITY;
        self.update_resident();
        Ok(n)
    }

    fn compact_queue(&mut self) {
        let tets = &self.tets;
        let entries: Vec<_> = self
            .queue
            .drain()
            .filter(|Reverse(e)| {
                let t = &tets[e.tet as usize];
                t.state == TetState::Online && t.generation == e.generation
            })
            .collect();
        self.queue = BinaryHeap::from(entries);
    }

    fn offline(&mut self, t: u32, sink: &mut dyn OfflineSink) -> Result<(), SweepError> {
        let tet = self.tets[t as usize].clone();
        let ghost = self.is_ghost_tet(&tet);
        let ids = tet.v.map(|s| self.sites[s as usize].id);
        if !ghost {
            sink.tetrahedron(&OfflineTet {
                ids,
                circumcenter: tet.sphere.center,
            })?;
            self.stats.real_tetrahedra_emitted += 1;
        }
        // unlink from online neighbours
        if self.cfg.audit {
            self.tets[t as usize].state = TetState::Offlined;
        } else {
            for nb in tet.n {
                if nb != BOUNDARY && nb != OFFLINE {
                    let n = &mut self.tets[nb as usize];
                    if let Some(j) = n.n.iter().position(|&x| x == t) {
                        n.n[j] = OFFLINE;
                    }
                }
            }
            self.release_tet(t);
        }
        self.stats.online_tetrahedra -= 1;
        self.stats.evicted_total += 1;
        for s in tet.v {
            if s < GHOSTS {
                continue;
            }
            let site = &mut self.sites[s as usize];
            if ghost {
                site.hull = true;
            } else {
                site.incident.push(IncidentTet {
                    ids,
                    circumcenter: tet.sphere.center,
                });
                self.incident_entries += 1;
            }
            site.incident_online -= 1;
            if site.incident_online == 0 {
                self.finalize(s, sink)?;
            }
        }
        Ok(())
    }

    fn finalize(&mut self, slot: u32, sink: &mut dyn OfflineSink) -> Result<(), SweepError> {
        let site = &mut self.sites[slot as usize];
        let incident = std::mem::take(&mut site.incident);
        let (id, position, hull) = (site.id, site.pos, site.hull);
        self.incident_entries -= incident.len() as u64;
        self.live.remove(&id);
        let mut neighbors: Vec<u32> = incident
            .iter()
            .flat_map(|t| t.ids)
            .filter(|&n| n != id)
            .collect();
        neighbors.sort_unstable();
        neighbors.dedup();
        let finalized_neighbors = neighbors
            .iter()
            .copied()
            .filter(|n| !self.live.contains_key(n))
            .collect();
        self.free_sites.push(slot);
        let seq = self.finalize_seq;
        self.finalize_seq += 1;
        self.stats.sites_finalized += 1;
        sink.site(FinalizedSite {
            seq,
            id,
            position,
            neighbors,
            finalized_neighbors,
            incident,
            hull,
        })
    }

    fn update_resident(&mut self) {
        let bytes = self.stats.online_tetrahedra as usize * std::mem::size_of::<Tet>()
            + self.queue.len() * std::mem::size_of::<Reverse<QueueEntry>>()
            + self.live.len()
                * (std::mem::size_of::<SiteSlot>() + 2 * std::mem::size_of::<(u32, u32)>())
            + self.incident_entries as usize * std::mem::size_of::<IncidentTet>()
            + self.grid.byte_size();
        self.stats.resident_bytes = bytes as u64;
        self.stats.peak_resident_bytes = self.stats.peak_resident_bytes.max(bytes as u64);
    }

    /// Vertex ids (ghosts reported as `None`) and circumsphere of each online
    /// tetrahedron.
    pub fn online_tetrahedra(&self) -> Vec<([Option<u32>; 4], [Point3; 4], Circumsphere)> {
        self.tets
            .iter()
            .filter(|t| t.state == TetState::Online)
            .map(|t| {
                let ids = t.v.map(|s| (s >= GHOSTS).then(|| self.sites[s as usize].id));
                let pos = t.v.map(|s| self.sites[s as usize].pos);
                (ids, pos, t.sphere)
            })
            .collect()
    }

    /// Structural checks: positive orientation, neighbour symmetry, and the
    /// per-site incident counters.
    pub fn check_invariants(&self) -> Result<(), String> {
        let mut counts: HashMap<u32, u32> = HashMap::new();
        for (i, t) in self.tets.iter().enumerate() {
            if t.state != TetState::Online {
                continue;
            }
            let pos = t.v.map(|s| self.sites[s as usize].pos);
            if orient3d(&pos[0], &pos[1], &pos[2], &pos[3]) != Sign::Positive {
                return Err(format!("tetrahedron {i} is not positively oriented"));
            }
            for s in t.v {
                *counts.entry(s).or_default() += 1;
            }
            for (k, &nb) in t.n.iter().enumerate() {
                if nb == BOUNDARY || nb == OFFLINE {
                    continue;
                }
                let n = &self.tets[nb as usize];
                if n.state == TetState::Free {
                    return Err(format!("tetrahedron {i} links to a freed slot {nb}"));
                }
                let back = n.n.iter().filter(|&&x| x == i as u32).count();
                if back != 1 {
                    return Err(format!("asymmetric link {i} -> {nb}"));
                }
                let mut shared: Vec<u32> = t.v.iter().copied().filter(|&v| v != t.v[k]).collect();
                let mut theirs: Vec<u32> = n.v.iter().copied().filter(|v| shared.contains(v)).collect();
                shared.sort_unstable();
                theirs.sort_unstable();
                if shared != theirs {
                    return Err(format!("tetrahedra {i} and {nb} do not share face {k}"));
                }
            }
        }
        for (&id, &slot) in &self.live {
            let c = counts.get(&slot).copied().unwrap_or(0);
            if c != self.sites[slot as usize].incident_online {
                return Err(format!(
                    "site {id}: counter {} but {c} online tetrahedra",
                    self.sites[slot as usize].incident_online
                ));
            }
        }
        Ok(())
    }
}

/// Rough count of sites in one inter-site-spacing layer of the sweep plane.
fn expected_layer_sites(bbox: &BoundingBox, n: u64) -> f64 {
    let e = bbox.extent();
    let n = n as f64;
    if n <= 0.0 {
        return 1.0;
    }
    let vol = e.x * e.y * e.z;
    if vol > 0.0 {
        let rho = n / vol;
        rho.powf(2.0 / 3.0) * e.y * e.z
    } else {
        n.sqrt()
    }
}

#[cfg(test)]
mod tests;
