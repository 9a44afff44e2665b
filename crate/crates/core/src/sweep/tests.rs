use std::collections::{BTreeSet, HashMap, HashSet};

use proptest::prelude::*;

use super::*;
use crate::geometry::insphere;
use crate::oracle::{delaunay_oracle, jittered_lattice, uniform_cube};

fn p(x: f64, y: f64, z: f64) -> Point3 {
    Point3::new(x, y, z)
}

/// Points in insertion order; ids are positions in the returned list.
fn sorted_records(points: &[Point3]) -> (Vec<Point3>, Vec<SiteRecord>) {
    let mut recs: Vec<SiteRecord> = points
        .iter()
        .enumerate()
        .map(|(i, q)| SiteRecord::new(i as u32, *q))
        .collect();
    recs.sort_by(SiteRecord::sweep_cmp);
    let pts: Vec<Point3> = recs.iter().map(|r| r.point()).collect();
    let recs = pts
        .iter()
        .enumerate()
        .map(|(i, q)| SiteRecord::new(i as u32, *q))
        .collect();
    (pts, recs)
}

fn frontier_for(points: &[Point3], cfg: KernelConfig) -> Frontier {
    let bbox = BoundingBox::from_points(points);
    Frontier::bootstrap(
        bbox,
        KernelConfig {
            expected_sites: points.len() as u64,
            ..cfg
        },
    )
    .unwrap()
}

fn run(points: &[Point3], cfg: KernelConfig) -> (Vec<Point3>, CollectSink, KernelStats) {
    let (pts, recs) = sorted_records(points);
    let mut f = frontier_for(&pts, cfg);
    let mut sink = CollectSink::default();
    for r in &recs {
        f.insert_site(r, &mut sink).unwrap();
    }
    f.finish(&mut sink).unwrap();
    (pts, sink, f.stats())
}

fn tet_set(sink: &CollectSink) -> BTreeSet<[usize; 4]> {
    sink.tets
        .iter()
        .map(|t| {
            let mut k = t.ids.map(|i| i as usize);
            k.sort_unstable();
            k
        })
        .collect()
}

fn cfg(mode: OffliningMode, cadence: usize) -> KernelConfig {
    KernelConfig {
        offlining: mode,
        eviction_cadence: cadence,
        ..KernelConfig::default()
    }
}

#[test]
fn bootstrap_encloses_unit_cube() {
    let bbox = BoundingBox::new(p(0.0, 0.0, 0.0), p(1.0, 1.0, 1.0));
    let f = Frontier::bootstrap(bbox, KernelConfig::default()).unwrap();
    assert_eq!(f.online_count(), 1);
    let online = f.online_tetrahedra();
    assert_eq!(online.len(), 1);
    let (ids, g, _) = online[0];
    assert_eq!(ids, [None; 4]);
    for q in &g {
        assert!(q.dist_sq(&bbox.center()).sqrt() >= 100.0 * bbox.diameter());
    }
    for i in 0..8 {
        let c = p((i & 1) as f64, ((i >> 1) & 1) as f64, ((i >> 2) & 1) as f64);
        for k in 0..4 {
            let mut t = g;
            t[k] = c;
            assert_eq!(orient3d(&t[0], &t[1], &t[2], &t[3]), Sign::Positive);
        }
    }
    assert!(f.tets[0].n.iter().all(|&n| n == BOUNDARY));
    f.check_invariants().unwrap();
}

#[test]
fn bootstrap_planar_and_bad_boxes() {
    let flat = BoundingBox::new(p(0.0, 0.0, 0.5), p(1.0, 1.0, 0.5));
    let mut f = Frontier::bootstrap(flat, KernelConfig::default()).unwrap();
    let mut sink = CollectSink::default();
    for (i, q) in [p(0.1, 0.2, 0.5), p(0.4, 0.9, 0.5), p(0.8, 0.1, 0.5)].iter().enumerate() {
        f.insert_site(&SiteRecord::new(i as u32, *q), &mut sink).unwrap();
    }
    f.check_invariants().unwrap();
    f.finish(&mut sink).unwrap();
    assert!(sink.tets.is_empty());
    assert_eq!(sink.sites.len(), 3);
    assert!(sink.sites.iter().all(|s| s.hull));

    assert!(matches!(
        Frontier::bootstrap(BoundingBox::empty(), KernelConfig::default()),
        Err(SweepError::DegenerateBox(_))
    ));
    let inf = BoundingBox::new(p(0.0, 0.0, 0.0), p(f64::INFINITY, 1.0, 1.0));
    assert!(Frontier::bootstrap(inf, KernelConfig::default()).is_err());
}

#[test]
fn locate_in_bootstrap_tetrahedron() {
    let bbox = BoundingBox::new(p(0.0, 0.0, 0.0), p(1.0, 1.0, 1.0));
    let mut f = Frontier::bootstrap(bbox, KernelConfig::default()).unwrap();
    assert_eq!(f.locate_seed(&p(0.3, 0.6, 0.2)).unwrap(), TetId(0));
}

/// Sites inserted without eviction, in sweep order.
fn build(points: &[Point3]) -> (Frontier, CollectSink) {
    let (_, recs) = sorted_records(points);
    let mut f = frontier_for(points, cfg(OffliningMode::Off, 1 << 30));
    let mut sink = CollectSink::default();
    for r in &recs {
        f.insert_site(r, &mut sink).unwrap();
    }
    (f, sink)
}

#[test]
fn cavity_of_one_tetrahedron() {
    let pts = [p(0.0, 0.0, 0.0), p(1.0, 0.0, 0.0), p(0.0, 1.0, 0.0), p(0.0, 0.0, 1.0)];
    let (mut f, _) = build(&pts);
    let q = p(0.2, 0.2, 0.2);
    let seed = f.locate_seed(&q).unwrap();
    let cavity = f.grow_cavity(seed, &q).unwrap();
    assert_eq!(cavity.tets.len(), 1);
    assert_eq!(cavity.boundary.len(), 4);
    let v = f.tets[cavity.tets[0].0 as usize].v;
    assert!(v.iter().all(|&s| s >= GHOSTS));

    let created = f.retriangulate(&cavity, &SiteRecord::new(99, q)).unwrap();
    assert_eq!(created.len(), 4);
    f.check_invariants().unwrap();
    // the four new tetrahedra form the star of q: each links to the other three
    let set: HashSet<u32> = created.iter().map(|t| t.0).collect();
    for t in &created {
        let inner = f.tets[t.0 as usize].n.iter().filter(|n| set.contains(n)).count();
        assert_eq!(inner, 3);
    }
}

#[test]
fn cavity_of_two_tetrahedra() {
    let s = 3f64.sqrt() / 2.0;
    let pts = [
        p(1.0, 0.0, 0.0),
        p(-0.5, s, 0.0),
        p(-0.5, -s, 0.0),
        p(0.0, 0.0, 1.5),
        p(0.0, 0.0, -1.5),
    ];
    let (mut f, _) = build(&pts);
    let q = p(0.0, 0.0, 0.0);
    let real: Vec<_> = f
        .online_tetrahedra()
        .into_iter()
        .filter(|(ids, _, _)| ids.iter().all(Option::is_some))
        .collect();
    assert_eq!(real.len(), 2);
    for (_, v, _) in &real {
        assert_eq!(insphere(&v[0], &v[1], &v[2], &v[3], &q).unwrap(), Sign::Positive);
    }
    let seed = f.locate_seed(&q).unwrap();
    let cavity = f.grow_cavity(seed, &q).unwrap();
    assert_eq!(cavity.tets.len(), 2);
    assert_eq!(cavity.boundary.len(), 6);
    let created = f.retriangulate(&cavity, &SiteRecord::new(99, q)).unwrap();
    assert_eq!(created.len(), 6);
    f.check_invariants().unwrap();
}

#[test]
fn locate_near_inserted_sites() {
    let pts = uniform_cube(100, 11);
    let (mut f, _) = build(&pts);
    for q in &pts {
        let probe = *q + p(1e-9, -2e-9, 1.5e-9);
        let t = f.locate_seed(&probe).unwrap();
        let v = f.tets[t.0 as usize].v.map(|s| f.sites[s as usize].pos);
        assert_eq!(insphere(&v[0], &v[1], &v[2], &v[3], &probe).unwrap(), Sign::Positive);
    }
    assert_eq!(f.stats().walk_fallbacks, 0);
}

#[test]
fn four_sites_then_drain() {
    let pts = [p(0.0, 0.0, 0.0), p(1.0, 0.0, 0.0), p(0.0, 1.0, 0.0), p(0.0, 0.0, 1.0)];
    let (_, sink, stats) = run(&pts, KernelConfig::default());
    assert_eq!(sink.tets.len(), 1);
    assert_eq!(stats.real_tetrahedra_emitted, 1);
    assert_eq!(sink.sites.len(), 4);
    assert!(sink.sites.iter().all(|s| s.hull && s.neighbors.len() == 3));
    assert_eq!(stats.online_tetrahedra, 0);
}

#[test]
fn evict_below_thresholds_is_noop() {
    let pts = uniform_cube(200, 3);
    let (mut f, mut sink) = build(&pts);
    let before = f.online_count();
    assert_eq!(f.evict(f64::NEG_INFINITY, &mut sink).unwrap(), 0);
    assert_eq!(f.online_count(), before);
    f.finish(&mut sink).unwrap();
    assert_eq!(f.online_count(), 0);
    assert_eq!(sink.sites.len(), 200);
}

#[test]
fn input_errors() {
    let bbox = BoundingBox::new(p(0.0, 0.0, 0.0), p(1.0, 1.0, 1.0));
    let mut f = Frontier::bootstrap(bbox, KernelConfig::default()).unwrap();
    let mut sink = CollectSink::default();
    f.insert_site(&SiteRecord::new(1, p(0.5, 0.5, 0.5)), &mut sink).unwrap();
    assert!(matches!(
        f.insert_site(&SiteRecord::new(2, p(0.4, 0.5, 0.5)), &mut sink),
        Err(SweepError::Unsorted { id: 2, .. })
    ));
    assert!(matches!(
        f.insert_site(&SiteRecord::new(3, p(0.6, f64::NAN, 0.5)), &mut sink),
        Err(SweepError::NonFinite { id: 3 })
    ));
    assert!(matches!(
        f.insert_site(&SiteRecord::new(4, p(0.6, 2.0, 0.5)), &mut sink),
        Err(SweepError::OutsideBox { id: 4 })
    ));
    assert!(matches!(
        f.insert_site(&SiteRecord::new(1, p(0.7, 0.5, 0.5)), &mut sink),
        Err(SweepError::DuplicateId { id: 1 })
    ));
    assert_eq!(
        f.insert_site(&SiteRecord::new(5, p(0.5, 0.5, 0.5)), &mut sink).unwrap(),
        InsertOutcome::Duplicate
    );
    assert_eq!(f.stats().duplicates, 1);
    f.check_invariants().unwrap();
}

#[test]
fn duplicate_sites_are_excluded() {
    let mut pts = uniform_cube(60, 5);
    let dup = pts[17];
    pts.push(dup);
    pts.push(pts[3]);
    let (_, recs) = sorted_records(&pts);
    let mut f = frontier_for(&pts, KernelConfig::default());
    let mut sink = CollectSink::default();
    let mut skipped = Vec::new();
    for r in &recs {
        if f.insert_site(r, &mut sink).unwrap() == InsertOutcome::Duplicate {
            skipped.push(r.id);
        }
    }
    f.finish(&mut sink).unwrap();
    assert_eq!(skipped.len(), 2);
    assert_eq!(sink.sites.len(), 60);
    assert!(sink.tets.iter().all(|t| t.ids.iter().all(|i| !skipped.contains(i))));
}

#[test]
fn matches_oracle_on_random_sets() {
    for seed in 0..4 {
        let (pts, sink, _) = run(&uniform_cube(200, seed), KernelConfig::default());
        assert_eq!(tet_set(&sink), delaunay_oracle(&pts).unwrap(), "seed {seed}");
    }
}

#[test]
fn matches_oracle_on_exact_lattice() {
    // every cube of the lattice is cospherical; only the perturbation decides
    let pts = jittered_lattice(4, 1.0, 0.0, 0);
    for mode in [OffliningMode::Off, OffliningMode::Improved] {
        let (sorted, sink, _) = run(&pts, cfg(mode, 4));
        let kernel = tet_set(&sink);
        assert_eq!(kernel, delaunay_oracle(&sorted).unwrap());
        let vol: f64 = sink
            .tets
            .iter()
            .map(|t| {
                let v = t.ids.map(|i| sorted[i as usize]);
                crate::geometry::tet_volume(&v[0], &v[1], &v[2], &v[3])
            })
            .sum();
        assert!((vol - 27.0).abs() < 1e-9, "{vol}");
    }
}

#[test]
fn eviction_does_not_change_the_result() {
    let pts = uniform_cube(1000, 42);
    let (_, off, _) = run(&pts, cfg(OffliningMode::Off, 1024));
    for mode in [OffliningMode::Naive, OffliningMode::Improved] {
        for cadence in [1, 64, 1024] {
            let (_, on, stats) = run(&pts, cfg(mode, cadence));
            assert_eq!(tet_set(&on), tet_set(&off), "{mode} every {cadence}");
            assert!(stats.peak_online_tetrahedra > 0);
        }
    }
}

#[test]
fn audit_mode_finds_no_offline_conflicts() {
    for seed in 0..3 {
        let pts = uniform_cube(3000, 100 + seed);
        for mode in [OffliningMode::Naive, OffliningMode::Improved] {
            let mut c = cfg(mode, 16);
            c.audit = true;
            let (_, sink, stats) = run(&pts, c);
            assert!(stats.evicted_total > 0);
            assert_eq!(sink.sites.len(), 3000);
        }
    }
}

#[test]
fn conservation_and_exactly_once() {
    let pts = uniform_cube(2000, 9);
    let (_, sink, stats) = run(&pts, cfg(OffliningMode::Improved, 32));
    assert_eq!(stats.created_total - stats.destroyed_total, stats.evicted_total);
    assert_eq!(stats.real_tetrahedra_emitted as usize, sink.tets.len());
    assert_eq!(tet_set(&sink).len(), sink.tets.len());
    let ids: HashSet<u32> = sink.sites.iter().map(|s| s.id).collect();
    assert_eq!(ids.len(), 2000);
    let seqs: Vec<u64> = sink.sites.iter().map(|s| s.seq).collect();
    assert_eq!(seqs, (0..2000).collect::<Vec<_>>());
}

/// Records kernel events in arrival order.
#[derive(Default)]
struct EventLog {
    events: Vec<Result<[u32; 4], u32>>,
}

impl OfflineSink for EventLog {
    fn tetrahedron(&mut self, tet: &OfflineTet) -> Result<(), SweepError> {
        self.events.push(Ok(tet.ids));
        Ok(())
    }
    fn site(&mut self, site: FinalizedSite) -> Result<(), SweepError> {
        self.events.push(Err(site.id));
        Ok(())
    }
}

#[test]
fn nothing_touches_a_finalized_site() {
    let (_, recs) = sorted_records(&uniform_cube(1500, 77));
    let mut f = frontier_for(&recs.iter().map(|r| r.point()).collect::<Vec<_>>(), cfg(OffliningMode::Improved, 8));
    let mut log = EventLog::default();
    for r in &recs {
        f.insert_site(r, &mut log).unwrap();
    }
    f.finish(&mut log).unwrap();
    let mut done = HashSet::new();
    let mut finalized_mid_run = 0;
    for e in &log.events {
        match e {
            Ok(ids) => assert!(ids.iter().all(|i| !done.contains(i)), "tetrahedron {ids:?} after finalization"),
            Err(id) => {
                done.insert(*id);
                finalized_mid_run += 1;
            }
        }
    }
    assert_eq!(finalized_mid_run, 1500);
}

#[test]
fn empty_sphere_invariant_at_pause_points() {
    let (pts, recs) = sorted_records(&uniform_cube(300, 21));
    let mut f = frontier_for(&pts, cfg(OffliningMode::Off, 1 << 30));
    let mut sink = CollectSink::default();
    for (k, r) in recs.iter().enumerate() {
        f.insert_site(r, &mut sink).unwrap();
        if k % 50 == 49 || k < 8 {
            f.check_invariants().unwrap();
            for (ids, v, _) in f.online_tetrahedra() {
                if ids.iter().any(Option::is_none) {
                    continue;
                }
                for q in &pts[..=k] {
                    assert_ne!(insphere(&v[0], &v[1], &v[2], &v[3], q).unwrap(), Sign::Positive);
                }
            }
        }
    }
}

#[test]
fn thresholds_stay_ahead_of_the_sweep() {
    let (pts, recs) = sorted_records(&uniform_cube(2000, 8));
    let mut f = frontier_for(&pts, cfg(OffliningMode::Improved, 1 << 30));
    let mut sink = CollectSink::default();
    for (k, r) in recs.iter().enumerate() {
        f.insert_site(r, &mut sink).unwrap();
        if k % 100 == 99 {
            f.evict(r.x, &mut sink).unwrap();
            assert!(f.min_online_threshold() >= r.x - f.guard());
            f.check_invariants().unwrap();
        }
    }
}

#[test]
fn hull_flags_match_oracle_hull() {
    let (pts, sink, _) = run(&uniform_cube(300, 4), KernelConfig::default());
    let mut face_count: HashMap<[usize; 3], u32> = HashMap::new();
    for t in delaunay_oracle(&pts).unwrap() {
        for skip in 0..4 {
            let f: Vec<usize> = (0..4).filter(|&k| k != skip).map(|k| t[k]).collect();
            *face_count.entry([f[0], f[1], f[2]]).or_default() += 1;
        }
    }
    let hull: HashSet<u32> = face_count
        .iter()
        .filter(|(_, &c)| c == 1)
        .flat_map(|(f, _)| f.iter().map(|&i| i as u32))
        .collect();
    for s in &sink.sites {
        assert_eq!(s.hull, hull.contains(&s.id), "site {}", s.id);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn walk_terminates_from_sparse_grid(
        seed in 0u64..1000,
        res in 1usize..64,
        probes in prop::collection::vec((0.0f64..1.0, 0.0f64..1.0, 0.0f64..1.0), 1..20),
    ) {
        let pts = uniform_cube(80, seed);
        let (sorted, recs) = sorted_records(&pts);
        let mut c = cfg(OffliningMode::Off, 1 << 30);
        c.grid_resolution = Some(res);
        let mut f = frontier_for(&sorted, c);
        let mut sink = CollectSink::default();
        for r in &recs {
            f.insert_site(r, &mut sink).unwrap();
        }
        for (x, y, z) in probes {
            let q = p(x, y, z);
            let before = f.stats().walk_steps;
            let t = f.locate_seed(&q).unwrap();
            prop_assert!(f.conflicts(t.0, &q, f.next_rank));
            prop_assert!(f.stats().walk_steps - before <= f.online_count() as u64 + 4);
        }
        prop_assert_eq!(f.stats().walk_fallbacks, 0);
    }

    #[test]
    fn small_random_sets_match_oracle(seed in 0u64..10_000, n in 5usize..60) {
        let (pts, sink, _) = run(&uniform_cube(n, seed), cfg(OffliningMode::Improved, 3));
        prop_assert_eq!(tet_set(&sink), delaunay_oracle(&pts).unwrap());
    }
}
