//! End-to-end run: ingest, principal-axis transform, external sort, sweep,
//! and the concurrent edge and volume outputs.
//!
//! The merge of the sorted runs, the sweep kernel, the volume workers and
//! the output writer run as separate threads joined by bounded channels.
//! The kernel is the only thread that touches the frontier; the writer owns
//! every output file and restores finalization order before writing.

mod bench;
mod stats;
mod verify;

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use crossbeam_channel::{bounded, Receiver, Sender};
use log::{info, warn};
use serde::Serialize;
use thiserror::Error;

pub use bench::{bench_deltax, sweep_sorted, BenchRow, CountingSink};
pub use stats::{emit_stats, plateau, read_stats, resample, StatsSample, StatsWriter};
pub use verify::{verify_points, verify_random, VerifyReport};

use crate::extsort::{csv_to_binary, ExternalSorter, SiteReader, SiteRecord, SortError, MIN_BUDGET, SORT_OVERHEAD_BYTES};
use crate::geometry::{BoundingBox, Point3};
use crate::pca::{axes_from_moments, transform, trim_count, MomentAccumulator, Rotation3, TransformHeader};
use crate::sweep::{Frontier, InsertOutcome, KernelConfig, OfflineSink, OfflineTet, OffliningMode, SweepError};
use crate::voronoi::{
    cell_volume, site_edges, EdgeRecord, EdgeWriter, FinalizedSite, OutputFormat, VolumeRecord, VolumeWriter,
    VoronoiError,
};

pub const EDGE_FILE: &str = "edges";
pub const VOLUME_FILE: &str = "volumes";
pub const STATS_FILE: &str = "stats.csv";
pub const HEADER_FILE: &str = "header.txt";
pub const REPORT_FILE: &str = "report.json";
pub const TETRAHEDRA_FILE: &str = "tetrahedra.bin";

/// Bytes per record of the offlined-tetrahedron spill file.
pub const SPILL_BYTES: usize = 40;

const BATCH: usize = 4096;
const QUEUE_DEPTH: usize = 1024;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum InputFormat {
    Binary,
    Csv,
}

impl std::str::FromStr for InputFormat {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "binary" | "bin" => Ok(InputFormat::Binary),
            "csv" => Ok(InputFormat::Csv),
            _ => Err(format!("unknown input format '{s}' (binary|csv)")),
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub input: PathBuf,
    pub input_format: InputFormat,
    pub output_dir: PathBuf,
    pub output_format: OutputFormat,
    /// Memory budget of the sort stage, in bytes.
    pub budget: u64,
    pub trim_fraction: f64,
    pub grid_resolution: Option<usize>,
    pub eviction_cadence: usize,
    pub offlining: OffliningMode,
    /// Threads computing cell volumes.
    pub workers: usize,
    pub pca: bool,
    /// Timeline row every this many insertions.
    pub stats_interval: u64,
    /// Write edges sorted by `(a, b)` and volumes by id instead of in
    /// finalization order.
    pub sort_output: bool,
    /// Also write every offlined real tetrahedron to `tetrahedra.bin`.
    pub spill_tetrahedra: bool,
    pub audit: bool,
    /// Directory for sort runs; the output directory when `None`.
    pub scratch_dir: Option<PathBuf>,
}

impl RunConfig {
    pub fn new(input: impl Into<PathBuf>, output_dir: impl Into<PathBuf>) -> Self {
        RunConfig {
            input: input.into(),
            input_format: InputFormat::Binary,
            output_dir: output_dir.into(),
            output_format: OutputFormat::Binary,
            budget: 256 << 20,
            trim_fraction: 0.04,
            grid_resolution: None,
            eviction_cadence: 1024,
            offlining: OffliningMode::Improved,
            workers: 1,
            pca: true,
            stats_interval: 1000,
            sort_output: false,
            spill_tetrahedra: false,
            audit: false,
            scratch_dir: None,
        }
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        let bad = |m: String| Err(PipelineError::Config(m));
        if self.budget < MIN_BUDGET {
            return bad(format!("budget {} is below the minimum of {MIN_BUDGET} bytes", self.budget));
        }
        if !(0.0..0.5).contains(&self.trim_fraction) {
            return bad(format!("trim fraction {} outside [0, 0.5)", self.trim_fraction));
        }
        if self.eviction_cadence < 1 {
            return bad("eviction cadence must be at least 1".into());
        }
        if self.stats_interval < 1 {
            return bad("stats interval must be at least 1".into());
        }
        if self.workers < 1 {
            return bad("need at least one volume worker".into());
        }
        if self.grid_resolution == Some(0) {
            return bad("grid resolution must be positive".into());
        }
        Ok(())
    }

    pub fn edge_path(&self) -> PathBuf {
        self.output_dir.join(output_name(EDGE_FILE, self.output_format))
    }

    pub fn volume_path(&self) -> PathBuf {
        self.output_dir.join(output_name(VOLUME_FILE, self.output_format))
    }
}

fn output_name(stem: &str, f: OutputFormat) -> String {
    match f {
        OutputFormat::Binary => format!("{stem}.bin"),
        OutputFormat::Csv => format!("{stem}.csv"),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Config,
    Ingest,
    Transform,
    Sort,
    Sweep,
    Volumes,
    Output,
}

impl std::fmt::Display for Stage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = serde_json::to_value(self).ok();
        f.write_str(s.as_ref().and_then(|v| v.as_str()).unwrap_or("?"))
    }
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("{stage} stage: {source}")]
    Io {
        stage: Stage,
        #[source]
        source: io::Error,
    },
    #[error("{stage} stage: {message}")]
    Data { stage: Stage, message: String },
    #[error("sweep stage: {0}")]
    Sweep(#[from] SweepError),
    #[error("volume stage: {0}")]
    Voronoi(#[from] VoronoiError),
}

impl PipelineError {
    fn io(stage: Stage) -> impl FnOnce(io::Error) -> PipelineError {
        move |source| PipelineError::Io { stage, source }
    }

    pub fn stage(&self) -> Stage {
        match self {
            PipelineError::Config(_) => Stage::Config,
            PipelineError::Io { stage, .. } | PipelineError::Data { stage, .. } => *stage,
            PipelineError::Sweep(_) => Stage::Sweep,
            PipelineError::Voronoi(_) => Stage::Volumes,
        }
    }
}

fn sort_err(e: SortError) -> PipelineError {
    match e {
        SortError::BudgetTooSmall { .. } => PipelineError::Config(e.to_string()),
        SortError::ScratchFull(source) | SortError::Io(source) => PipelineError::Io {
            stage: Stage::Sort,
            source,
        },
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct StageTimes {
    pub ingest: f64,
    pub transform: f64,
    pub sort: f64,
    pub sweep: f64,
    pub total: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct RunReport {
    pub sites_read: u64,
    pub sites_trimmed: u64,
    pub sites_inserted: u64,
    pub sites_duplicated: u64,
    pub sites_finalized: u64,
    pub tetrahedra_created: u64,
    pub tetrahedra_destroyed: u64,
    pub tetrahedra_evicted: u64,
    pub real_tetrahedra: u64,
    pub edges_emitted: u64,
    /// Σ |N(s)| over all finalized sites; twice the edge count.
    pub degree_sum: u64,
    pub bounded_cells: u64,
    pub unbounded_cells: u64,
    pub peak_online_tetrahedra: u64,
    pub peak_resident_bytes: u64,
    pub sort_runs: usize,
    pub sort_budget_bytes: u64,
    pub sort_peak_bytes: u64,
    pub sort_overhead_bytes: u64,
    pub walk_fallbacks: u64,
    pub grid_resolution: usize,
    pub trim_interval: Option<(f64, f64)>,
    pub offlining: String,
    pub workers: usize,
    pub seconds: StageTimes,
}

/// Offlined-tetrahedron spill record: four ids and the circumcenter.
pub fn encode_spill(t: &OfflineTet) -> [u8; SPILL_BYTES] {
    let mut b = [0u8; SPILL_BYTES];
    for (k, id) in t.ids.iter().enumerate() {
        b[4 * k..4 * k + 4].copy_from_slice(&id.to_le_bytes());
    }
    for (k, v) in t.circumcenter.to_array().iter().enumerate() {
        b[16 + 8 * k..24 + 8 * k].copy_from_slice(&v.to_le_bytes());
    }
    b
}

pub fn read_spill(path: &Path) -> io::Result<Vec<OfflineTet>> {
    let bytes = std::fs::read(path)?;
    if bytes.len() % SPILL_BYTES != 0 {
        return Err(io::Error::new(io::ErrorKind::InvalidData, "truncated tetrahedron file"));
    }
    Ok(bytes
        .chunks_exact(SPILL_BYTES)
        .map(|c| {
            let id = |k: usize| u32::from_le_bytes(c[4 * k..4 * k + 4].try_into().unwrap());
            let f = |k: usize| f64::from_le_bytes(c[16 + 8 * k..24 + 8 * k].try_into().unwrap());
            OfflineTet {
                ids: [id(0), id(1), id(2), id(3)],
                circumcenter: Point3::new(f(0), f(1), f(2)),
            }
        })
        .collect())
}

/// Outputs of one finalized site, computed by a volume worker.
struct SiteOutput {
    seq: u64,
    edges: Vec<EdgeRecord>,
    volume: VolumeRecord,
    degree: u64,
}

#[derive(Debug, Default)]
struct WriterTotals {
    edges: u64,
    degree_sum: u64,
    bounded: u64,
    unbounded: u64,
    sites: u64,
}

/// Kernel-side sink: finalized sites go to the volume workers, tetrahedra
/// optionally to the spill file.
struct ChannelSink {
    sites: Sender<FinalizedSite>,
    spill: Option<BufWriter<File>>,
}

impl OfflineSink for ChannelSink {
    fn tetrahedron(&mut self, tet: &OfflineTet) -> Result<(), SweepError> {
        if let Some(w) = self.spill.as_mut() {
            w.write_all(&encode_spill(tet)).map_err(|e| SweepError::Sink(e.to_string()))?;
        }
        Ok(())
    }

    fn site(&mut self, site: FinalizedSite) -> Result<(), SweepError> {
        self.sites
            .send(site)
            .map_err(|_| SweepError::Sink("volume stage stopped".into()))
    }
}

fn volume_worker(rx: Receiver<FinalizedSite>, tx: Sender<Result<SiteOutput, VoronoiError>>) {
    for site in rx {
        let out = cell_volume(&site).map(|volume| SiteOutput {
            seq: site.seq,
            edges: site_edges(&site),
            volume,
            degree: site.neighbors.len() as u64,
        });
        if tx.send(out).is_err() {
            return;
        }
    }
}

struct OutputFiles {
    edges: PathBuf,
    volumes: PathBuf,
    format: OutputFormat,
    sort: bool,
}

fn partial(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".partial");
    PathBuf::from(s)
}

fn write_outputs(rx: Receiver<Result<SiteOutput, VoronoiError>>, files: &OutputFiles) -> Result<WriterTotals, PipelineError> {
    let io_err = PipelineError::io(Stage::Output);
    let mut ew = EdgeWriter::create(&partial(&files.edges), files.format).map_err(io_err)?;
    let mut vw = VolumeWriter::create(&partial(&files.volumes), files.format).map_err(PipelineError::io(Stage::Output))?;
    let mut totals = WriterTotals::default();
    let mut pending: BTreeMap<u64, SiteOutput> = BTreeMap::new();
    let mut next = 0u64;
    let (mut all_edges, mut all_volumes) = (Vec::new(), Vec::new());
    let mut emit = |o: SiteOutput, t: &mut WriterTotals| -> io::Result<()> {
        t.sites += 1;
        t.edges += o.edges.len() as u64;
        t.degree_sum += o.degree;
        if o.volume.is_bounded() {
            t.bounded += 1;
        } else {
            t.unbounded += 1;
        }
        if files.sort {
            all_edges.extend(o.edges);
            all_volumes.push(o.volume);
            return Ok(());
        }
        for e in &o.edges {
            ew.write(e)?;
        }
        vw.write(&o.volume)
    };
    for msg in rx {
        let o = msg?;
        pending.insert(o.seq, o);
        while let Some(o) = pending.remove(&next) {
            emit(o, &mut totals).map_err(PipelineError::io(Stage::Output))?;
            next += 1;
        }
    }
    if !pending.is_empty() {
        return Err(PipelineError::Data {
            stage: Stage::Output,
            message: format!("finalization sequence has a gap at {next}"),
        });
    }
    drop(emit);
    if files.sort {
        all_edges.sort_unstable();
        all_volumes.sort_by_key(|v| v.id);
        for e in &all_edges {
            ew.write(e).map_err(PipelineError::io(Stage::Output))?;
        }
        for v in &all_volumes {
            vw.write(v).map_err(PipelineError::io(Stage::Output))?;
        }
    }
    ew.finish().map_err(PipelineError::io(Stage::Output))?;
    vw.finish().map_err(PipelineError::io(Stage::Output))?;
    Ok(totals)
}

fn normalize_zero(r: SiteRecord) -> SiteRecord {
    // -0.0 + 0.0 == +0.0, so equal coordinates have equal bits
    SiteRecord {
        x: r.x + 0.0,
        y: r.y + 0.0,
        z: r.z + 0.0,
        ..r
    }
}

fn secs(t: Instant) -> f64 {
    t.elapsed().as_secs_f64()
}

/// Run the whole pipeline. On failure, partial outputs are removed.
pub fn run_pipeline(cfg: &RunConfig) -> Result<RunReport, PipelineError> {
    cfg.validate()?;
    std::fs::create_dir_all(&cfg.output_dir).map_err(PipelineError::io(Stage::Output))?;
    let result = run_stages(cfg);
    if result.is_err() {
        for p in [cfg.edge_path(), cfg.volume_path()] {
            let _ = std::fs::remove_file(partial(&p));
        }
        for name in [STATS_FILE, HEADER_FILE, REPORT_FILE, TETRAHEDRA_FILE] {
            let _ = std::fs::remove_file(partial(&cfg.output_dir.join(name)));
        }
    }
    result
}

fn run_stages(cfg: &RunConfig) -> Result<RunReport, PipelineError> {
    let t_total = Instant::now();
    let mut report = RunReport {
        offlining: cfg.offlining.to_string(),
        workers: cfg.workers,
        sort_budget_bytes: cfg.budget,
        sort_overhead_bytes: SORT_OVERHEAD_BYTES,
        ..RunReport::default()
    };
    let scratch_root = cfg.scratch_dir.clone().unwrap_or_else(|| cfg.output_dir.clone());
    std::fs::create_dir_all(&scratch_root).map_err(PipelineError::io(Stage::Ingest))?;
    let scratch = tempfile::Builder::new()
        .prefix("sweepdt-ingest")
        .tempdir_in(&scratch_root)
        .map_err(PipelineError::io(Stage::Ingest))?;

    // ingest
    let t = Instant::now();
    let input = match cfg.input_format {
        InputFormat::Binary => cfg.input.clone(),
        InputFormat::Csv => {
            let bin = scratch.path().join("input.bin");
            csv_to_binary(&cfg.input, &bin).map_err(PipelineError::io(Stage::Ingest))?;
            bin
        }
    };
    report.seconds.ingest = secs(t);

    // pass A: moments
    let t = Instant::now();
    let mut moments = MomentAccumulator::new();
    for r in SiteReader::open(&input).map_err(PipelineError::io(Stage::Transform))? {
        let r = r.map_err(PipelineError::io(Stage::Transform))?;
        if !r.is_finite() {
            return Err(PipelineError::Data {
                stage: Stage::Transform,
                message: format!("site {} has non-finite coordinates", r.id),
            });
        }
        moments.add(&normalize_zero(r).point());
        report.sites_read += 1;
    }
    let (centroid, rotation) = if cfg.pca && moments.count() >= 4 {
        match axes_from_moments(&moments) {
            Ok(a) => a,
            Err(e) => {
                warn!("principal axes unavailable ({e}); sweeping along x");
                (Point3::new(0.0, 0.0, 0.0), Rotation3::IDENTITY)
            }
        }
    } else {
        (Point3::new(0.0, 0.0, 0.0), Rotation3::IDENTITY)
    };
    report.seconds.transform = secs(t);

    // pass B: transform into the sorter
    let t = Instant::now();
    let mut sorter = ExternalSorter::new(cfg.budget, scratch.path()).map_err(sort_err)?;
    let mut all_box = BoundingBox::empty();
    for r in SiteReader::open(&input).map_err(PipelineError::io(Stage::Sort))? {
        let r = normalize_zero(r.map_err(PipelineError::io(Stage::Sort))?);
        let q = transform(&r.point(), &centroid, &rotation);
        let rec = normalize_zero(SiteRecord::new(r.id, q));
        all_box.include(&rec.point());
        sorter.push(rec).map_err(sort_err)?;
    }
    let runs = sorter.finish().map_err(sort_err)?;
    report.sort_runs = runs.run_count();
    let n = runs.len();
    let trim = if n > 0 {
        let k = trim_count(n, cfg.trim_fraction);
        let lo = runs.select(k).map_err(PipelineError::io(Stage::Sort))?.x;
        let hi = runs.select(n - 1 - k).map_err(PipelineError::io(Stage::Sort))?.x;
        Some((lo, hi))
    } else {
        None
    };
    report.trim_interval = trim;
    let bbox = trim.map(|(lo, hi)| {
        BoundingBox::new(Point3::new(lo, all_box.min.y, all_box.min.z), Point3::new(hi, all_box.max.y, all_box.max.z))
    });
    let header = TransformHeader {
        centroid,
        rotation,
        trim_fraction: cfg.trim_fraction,
        trim,
        bbox,
    };
    let header_path = cfg.output_dir.join(HEADER_FILE);
    header.write(&partial(&header_path)).map_err(PipelineError::io(Stage::Output))?;
    let sort_meter = runs.meter();
    report.seconds.sort = secs(t);

    // sweep
    let t = Instant::now();
    let stats_path = cfg.output_dir.join(STATS_FILE);
    let mut stats_out = StatsWriter::new(BufWriter::new(
        File::create(partial(&stats_path)).map_err(PipelineError::io(Stage::Output))?,
    ))
    .map_err(PipelineError::io(Stage::Output))?;
    let spill_path = cfg.output_dir.join(TETRAHEDRA_FILE);
    let spill = if cfg.spill_tetrahedra {
        Some(BufWriter::new(File::create(partial(&spill_path)).map_err(PipelineError::io(Stage::Output))?))
    } else {
        None
    };
    let files = OutputFiles {
        edges: cfg.edge_path(),
        volumes: cfg.volume_path(),
        format: cfg.output_format,
        sort: cfg.sort_output,
    };

    let stream = runs.merge().map_err(PipelineError::io(Stage::Sort))?;
    let (rec_tx, rec_rx) = bounded::<io::Result<Vec<SiteRecord>>>(4);
    let (site_tx, site_rx) = bounded::<FinalizedSite>(QUEUE_DEPTH);
    let (out_tx, out_rx) = bounded::<Result<SiteOutput, VoronoiError>>(QUEUE_DEPTH);

    let (kernel_result, writer_result) = std::thread::scope(|s| {
        s.spawn(move || {
            let mut batch = Vec::with_capacity(BATCH);
            for r in stream {
                match r {
                    Ok(r) => batch.push(r),
                    Err(e) => {
                        let _ = rec_tx.send(Err(e));
                        return;
                    }
                }
                if batch.len() == BATCH && rec_tx.send(Ok(std::mem::replace(&mut batch, Vec::with_capacity(BATCH)))).is_err() {
                    return;
                }
            }
            if !batch.is_empty() {
                let _ = rec_tx.send(Ok(batch));
            }
        });
        for _ in 0..cfg.workers {
            let (rx, tx) = (site_rx.clone(), out_tx.clone());
            s.spawn(move || volume_worker(rx, tx));
        }
        drop(site_rx);
        drop(out_tx);
        let writer = s.spawn(|| write_outputs(out_rx, &files));

        let mut sink = ChannelSink { sites: site_tx, spill };
        let kernel = sweep_stream(cfg, bbox, n, rec_rx, &mut sink, &mut stats_out, &mut report);
        let spill = sink.spill.take();
        drop(sink);
        let writer = writer.join().expect("writer thread panicked");
        (kernel.map(|k| (k, spill)), writer)
    });
    let totals = match (kernel_result, writer_result) {
        (Ok(_), Err(e)) | (Err(_), Err(e)) => return Err(e),
        (Err(e), Ok(_)) => return Err(e),
        (Ok((_, spill)), Ok(totals)) => {
            if let Some(mut w) = spill {
                w.flush().map_err(PipelineError::io(Stage::Output))?;
            }
            totals
        }
    };
    stats_out
        .finish()
        .and_then(|mut w| w.flush())
        .map_err(PipelineError::io(Stage::Output))?;
    report.seconds.sweep = secs(t);

    report.edges_emitted = totals.edges;
    report.degree_sum = totals.degree_sum;
    report.bounded_cells = totals.bounded;
    report.unbounded_cells = totals.unbounded;
    report.sort_peak_bytes = sort_meter.peak();
    if totals.sites != report.sites_finalized {
        return Err(PipelineError::Data {
            stage: Stage::Output,
            message: format!("{} sites finalized but {} written", report.sites_finalized, totals.sites),
        });
    }
    if report.sites_inserted != report.sites_read - report.sites_trimmed - report.sites_duplicated {
        return Err(PipelineError::Data {
            stage: Stage::Sweep,
            message: "site accounting does not balance".into(),
        });
    }
    report.seconds.total = secs(t_total);

    let commit = |p: &Path| std::fs::rename(partial(p), p).map_err(PipelineError::io(Stage::Output));
    commit(&files.edges)?;
    commit(&files.volumes)?;
    commit(&stats_path)?;
    commit(&header_path)?;
    if cfg.spill_tetrahedra {
        commit(&spill_path)?;
    }
    let json = serde_json::to_string_pretty(&report).expect("report serializes");
    std::fs::write(cfg.output_dir.join(REPORT_FILE), json + "\n").map_err(PipelineError::io(Stage::Output))?;
    info!(
        "{} sites inserted, {} edges, peak {} online tetrahedra",
        report.sites_inserted, report.edges_emitted, report.peak_online_tetrahedra
    );
    Ok(report)
}

/// The kernel loop: trim, insert, sample the timeline, drain.
fn sweep_stream(
    cfg: &RunConfig,
    bbox: Option<BoundingBox>,
    n: u64,
    records: Receiver<io::Result<Vec<SiteRecord>>>,
    sink: &mut ChannelSink,
    stats_out: &mut StatsWriter<BufWriter<File>>,
    report: &mut RunReport,
) -> Result<(), PipelineError> {
    let Some(bbox) = bbox else {
        return Ok(());
    };
    let kcfg = KernelConfig {
        offlining: cfg.offlining,
        eviction_cadence: cfg.eviction_cadence,
        grid_resolution: cfg.grid_resolution,
        expected_sites: n,
        audit: cfg.audit,
        ..KernelConfig::default()
    };
    let mut f = Frontier::bootstrap(bbox, kcfg)?;
    report.grid_resolution = f.grid_resolution();
    let stats_err = PipelineError::io(Stage::Output);
    let mut sample_err = None;
    for batch in records {
        let batch = batch.map_err(PipelineError::io(Stage::Sort))?;
        for r in &batch {
            if r.x < bbox.min.x || r.x > bbox.max.x {
                report.sites_trimmed += 1;
                continue;
            }
            match f.insert_site(r, sink)? {
                InsertOutcome::Inserted => {
                    let st = f.stats();
                    if st.sites_inserted % cfg.stats_interval == 0 {
                        if let Err(e) = stats_out.push(&StatsSample::from(&st)) {
                            sample_err = Some(e);
                        }
                    }
                }
                InsertOutcome::Duplicate => report.sites_duplicated += 1,
            }
        }
        if let Some(e) = sample_err.take() {
            return Err(stats_err(e));
        }
    }
    f.finish(sink)?;
    let st = f.stats();
    if st.sites_inserted > 0 {
        stats_out.push(&StatsSample::from(&st)).map_err(PipelineError::io(Stage::Output))?;
    }
    report.sites_inserted = st.sites_inserted;
    report.sites_finalized = st.sites_finalized;
    report.tetrahedra_created = st.created_total;
    report.tetrahedra_destroyed = st.destroyed_total;
    report.tetrahedra_evicted = st.evicted_total;
    report.real_tetrahedra = st.real_tetrahedra_emitted;
    report.peak_online_tetrahedra = st.peak_online_tetrahedra;
    report.peak_resident_bytes = st.peak_resident_bytes;
    report.walk_fallbacks = st.walk_fallbacks;
    if st.walk_fallbacks > 0 {
        warn!("{} point locations fell back to a scan", st.walk_fallbacks);
    }
    Ok(())
}
