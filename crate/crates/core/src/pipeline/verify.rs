use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;

use serde::Serialize;

use super::{read_spill, run_pipeline, PipelineError, RunConfig, Stage, HEADER_FILE, TETRAHEDRA_FILE};
use crate::extsort::{write_sites, SiteRecord, MIN_BUDGET};
use crate::geometry::Point3;
use crate::oracle::{delaunay_oracle, uniform_cube, voronoi_volume_oracle};
use crate::pca::{transform, TransformHeader};
use crate::voronoi::{read_edges, read_volumes, EdgeRecord, UNBOUNDED};

/// Relative tolerance for bounded cell volumes.
pub const VOLUME_TOLERANCE: f64 = 1e-6;

/// Outcome of one cross-check of the pipeline against the oracles.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct VerifyReport {
    pub sites: usize,
    pub tetrahedra: usize,
    pub edges: usize,
    pub bounded_cells: usize,
    pub simplices_match: bool,
    pub edges_match: bool,
    pub volumes_match: bool,
    pub max_volume_rel_err: f64,
    pub failures: Vec<String>,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.simplices_match && self.edges_match && self.volumes_match && self.failures.is_empty()
    }
}

impl fmt::Display for VerifyReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "{}: {} sites, {} tetrahedra, {} edges, {} bounded cells",
            if self.passed() { "PASS" } else { "FAIL" },
            self.sites,
            self.tetrahedra,
            self.edges,
            self.bounded_cells
        )?;
        writeln!(f, "  simplex sets equal: {}", self.simplices_match)?;
        writeln!(f, "  edge sets equal:    {}", self.edges_match)?;
        writeln!(
            f,
            "  volumes agree:      {} (max rel err {:.3e})",
            self.volumes_match, self.max_volume_rel_err
        )?;
        for m in &self.failures {
            writeln!(f, "  {m}")?;
        }
        Ok(())
    }
}

/// Run the full pipeline on `points` (ids are list positions) without
/// trimming and compare tetrahedra, edges and volumes with the oracles.
/// The oracles work in the same sweep coordinates and insertion order as
/// the kernel, so the comparison of topology is exact.
pub fn verify_points(points: &[Point3], work_dir: &Path, pca: bool) -> Result<VerifyReport, PipelineError> {
    let io = |e| PipelineError::Io {
        stage: Stage::Output,
        source: e,
    };
    std::fs::create_dir_all(work_dir).map_err(io)?;
    let input = work_dir.join("sites.bin");
    let records: Vec<SiteRecord> = points.iter().enumerate().map(|(i, p)| SiteRecord::new(i as u32, *p)).collect();
    write_sites(&input, &records).map_err(io)?;
    let out = work_dir.join("out");
    let mut cfg = RunConfig::new(&input, &out);
    cfg.trim_fraction = 0.0;
    cfg.budget = MIN_BUDGET;
    cfg.spill_tetrahedra = true;
    cfg.pca = pca;
    cfg.eviction_cadence = 16;
    let run = run_pipeline(&cfg)?;

    let header = TransformHeader::read(&out.join(HEADER_FILE)).map_err(io)?;
    let mut swept: Vec<SiteRecord> = records
        .iter()
        .map(|r| SiteRecord::new(r.id, transform(&r.point(), &header.centroid, &header.rotation) + Point3::new(0.0, 0.0, 0.0)))
        .collect();
    swept.sort_by(|a, b| a.sweep_cmp(b));
    let sorted: Vec<Point3> = swept.iter().map(|r| r.point()).collect();
    let id_of = |i: usize| swept[i].id;

    let mut report = VerifyReport {
        sites: points.len(),
        ..VerifyReport::default()
    };
    if run.sites_duplicated > 0 {
        report.failures.push(format!("{} duplicate sites in input", run.sites_duplicated));
        return Ok(report);
    }

    // simplices
    let oracle_tets = match delaunay_oracle(&sorted) {
        Ok(t) => t,
        Err(e) => {
            report.failures.push(format!("delaunay oracle: {e}"));
            return Ok(report);
        }
    };
    let canon = |mut t: [u32; 4]| {
        t.sort_unstable();
        t
    };
    let expected: BTreeSet<[u32; 4]> = oracle_tets.iter().map(|t| canon(t.map(id_of))).collect();
    let spilled = read_spill(&out.join(TETRAHEDRA_FILE)).map_err(io)?;
    let got: BTreeSet<[u32; 4]> = spilled.iter().map(|t| canon(t.ids)).collect();
    report.tetrahedra = spilled.len();
    report.simplices_match = got == expected && got.len() == spilled.len();
    if !report.simplices_match {
        report.failures.push(format!(
            "tetrahedra: {} emitted, {} distinct, {} expected, {} missing, {} extra",
            spilled.len(),
            got.len(),
            expected.len(),
            expected.difference(&got).count(),
            got.difference(&expected).count()
        ));
    }

    // edges
    let expected_edges: BTreeSet<EdgeRecord> = expected
        .iter()
        .flat_map(|t| {
            let t = *t;
            (0..4).flat_map(move |i| (i + 1..4).map(move |j| EdgeRecord::new(t[i], t[j])))
        })
        .collect();
    let edges = read_edges(&cfg.edge_path()).map_err(io)?;
    report.edges = edges.len();
    let edge_set: BTreeSet<EdgeRecord> = edges.iter().copied().collect();
    report.edges_match = edge_set.len() == edges.len() && edge_set == expected_edges && 2 * run.edges_emitted == run.degree_sum;
    if !report.edges_match {
        report.failures.push(format!(
            "edges: {} emitted, {} distinct, {} expected, degree sum {}",
            edges.len(),
            edge_set.len(),
            expected_edges.len(),
            run.degree_sum
        ));
    }

    // volumes
    let index_of: BTreeMap<u32, usize> = swept.iter().enumerate().map(|(i, r)| (r.id, i)).collect();
    let volumes = read_volumes(&cfg.volume_path()).map_err(io)?;
    report.volumes_match = volumes.len() == points.len();
    if !report.volumes_match {
        report.failures.push(format!("{} volume records for {} sites", volumes.len(), points.len()));
    }
    for v in &volumes {
        let Some(&i) = index_of.get(&v.id) else {
            report.volumes_match = false;
            report.failures.push(format!("volume for unknown site {}", v.id));
            continue;
        };
        let o = match voronoi_volume_oracle(i, &sorted) {
            Ok(o) => o,
            Err(e) => {
                report.volumes_match = false;
                report.failures.push(format!("voronoi oracle: {e}"));
                break;
            }
        };
        if (v.volume == UNBOUNDED) != (o == UNBOUNDED) {
            report.volumes_match = false;
            report.failures.push(format!("site {}: volume {} but oracle {}", v.id, v.volume, o));
            continue;
        }
        if o != UNBOUNDED {
            report.bounded_cells += 1;
            let rel = (v.volume - o).abs() / o;
            report.max_volume_rel_err = report.max_volume_rel_err.max(rel);
            if !(rel <= VOLUME_TOLERANCE) {
                report.volumes_match = false;
                report.failures.push(format!("site {}: volume {} vs oracle {}", v.id, v.volume, o));
            }
        }
    }
    Ok(report)
}

/// [`verify_points`] on `n` uniform sites in the unit cube.
pub fn verify_random(n: usize, seed: u64, work_dir: &Path) -> Result<VerifyReport, PipelineError> {
    verify_points(&uniform_cube(n, seed), work_dir, true)
}
