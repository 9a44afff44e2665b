use std::time::Instant;

use serde::Serialize;

use super::StatsSample;
use crate::extsort::SiteRecord;
use crate::geometry::BoundingBox;
use crate::oracle::{generate_box, SyntheticBoxSpec};
use crate::sweep::{Frontier, KernelConfig, KernelStats, OfflineSink, OfflineTet, OffliningMode, SweepError};
use crate::voronoi::FinalizedSite;

/// Sink that only counts what it is handed.
#[derive(Debug, Default, Clone, Copy)]
pub struct CountingSink {
    pub tetrahedra: u64,
    pub sites: u64,
    pub degree_sum: u64,
}

impl OfflineSink for CountingSink {
    fn tetrahedron(&mut self, _tet: &OfflineTet) -> Result<(), SweepError> {
        self.tetrahedra += 1;
        Ok(())
    }

    fn site(&mut self, site: FinalizedSite) -> Result<(), SweepError> {
        self.sites += 1;
        self.degree_sum += site.neighbors.len() as u64;
        Ok(())
    }
}

/// Sweep already sorted records in memory, sampling the timeline every
/// `interval` insertions (plus once after the drain).
pub fn sweep_sorted(
    records: &[SiteRecord],
    cfg: KernelConfig,
    interval: u64,
    sink: &mut dyn OfflineSink,
) -> Result<(KernelStats, Vec<StatsSample>), SweepError> {
    let bbox = BoundingBox::from_points(&records.iter().map(|r| r.point()).collect::<Vec<_>>());
    let cfg = KernelConfig {
        expected_sites: records.len() as u64,
        ..cfg
    };
    let mut f = Frontier::bootstrap(bbox, cfg)?;
    let interval = interval.max(1);
    let mut samples = Vec::new();
    for r in records {
        f.insert_site(r, sink)?;
        let st = f.stats();
        if st.sites_inserted % interval == 0 {
            samples.push(StatsSample::from(&st));
        }
    }
    f.finish(sink)?;
    let st = f.stats();
    samples.push(StatsSample::from(&st));
    Ok((st, samples))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchRow {
    pub dx: f64,
    pub sites: u64,
    pub offlining: String,
    pub peak_online_tetrahedra: u64,
    pub tetrahedra_created: u64,
    pub real_tetrahedra: u64,
    pub peak_resident_bytes: u64,
    pub seconds: f64,
}

/// One homogeneous box run per `dx` with unit y and z extents at fixed
/// density.
pub fn bench_deltax(dxs: &[f64], density: f64, seed: u64, mode: OffliningMode) -> Result<Vec<BenchRow>, SweepError> {
    let mut rows = Vec::with_capacity(dxs.len());
    for &dx in dxs {
        let spec = SyntheticBoxSpec::slab(dx, density, seed);
        let mut records: Vec<SiteRecord> = generate_box(&spec).collect();
        records.sort_unstable_by(|a, b| a.sweep_cmp(b));
        let t = Instant::now();
        let cfg = KernelConfig {
            offlining: mode,
            ..KernelConfig::default()
        };
        let (st, _) = sweep_sorted(&records, cfg, u64::MAX, &mut CountingSink::default())?;
        rows.push(BenchRow {
            dx,
            sites: st.sites_inserted,
            offlining: mode.to_string(),
            peak_online_tetrahedra: st.peak_online_tetrahedra,
            tetrahedra_created: st.created_total,
            real_tetrahedra: st.real_tetrahedra_emitted,
            peak_resident_bytes: st.peak_resident_bytes,
            seconds: t.elapsed().as_secs_f64(),
        });
    }
    Ok(rows)
}
