//! External merge sort of site records by sweep coordinate under a memory
//! budget: budget-sized sorted runs, then one k-way loser-tree merge.

mod loser_tree;
mod record;

use std::cmp::Ordering;
use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Seek, SeekFrom};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering as AtomicOrdering};
use std::sync::Arc;

use thiserror::Error;

pub use loser_tree::LoserTree;
pub use record::*;

/// Smallest accepted sort budget.
pub const MIN_BUDGET: u64 = 64 << 20;

/// Bytes of bookkeeping outside the metered buffers (loser tree, file
/// handles, small structs). Peak sort memory is at most budget + this.
pub const SORT_OVERHEAD_BYTES: u64 = 1 << 20;

const WRITE_BUFFER: usize = 1 << 16;
const MIN_READ_BUFFER: usize = 1 << 12;
const MAX_READ_BUFFER: usize = 1 << 20;
const RECORD_MEM: u64 = std::mem::size_of::<SiteRecord>() as u64;

#[derive(Debug, Error)]
pub enum SortError {
    #[error("sort budget of {budget} bytes is below the minimum of {min}")]
    BudgetTooSmall { budget: u64, min: u64 },
    #[error("scratch space exhausted: {0}")]
    ScratchFull(io::Error),
    #[error(transparent)]
    Io(io::Error),
}

impl From<io::Error> for SortError {
    fn from(e: io::Error) -> Self {
        if e.kind() == io::ErrorKind::StorageFull {
            SortError::ScratchFull(e)
        } else {
            SortError::Io(e)
        }
    }
}

/// Internal accounting of buffer bytes, with a high-water mark.
#[derive(Debug, Default)]
pub struct MemoryMeter {
    current: AtomicU64,
    peak: AtomicU64,
}

impl MemoryMeter {
    pub fn new() -> Arc<Self> {
        Arc::new(MemoryMeter::default())
    }

    pub fn alloc(&self, bytes: u64) {
        let now = self.current.fetch_add(bytes, AtomicOrdering::Relaxed) + bytes;
        self.peak.fetch_max(now, AtomicOrdering::Relaxed);
    }

    pub fn free(&self, bytes: u64) {
        self.current.fetch_sub(bytes, AtomicOrdering::Relaxed);
    }

    pub fn current(&self) -> u64 {
        self.current.load(AtomicOrdering::Relaxed)
    }

    pub fn peak(&self) -> u64 {
        self.peak.load(AtomicOrdering::Relaxed)
    }
}

/// Accepts records in any order and produces them sorted by `sweep_cmp`.
pub struct ExternalSorter {
    chunk: Vec<SiteRecord>,
    chunk_records: usize,
    scratch: tempfile::TempDir,
    runs: Vec<(PathBuf, u64)>,
    len: u64,
    budget: u64,
    meter: Arc<MemoryMeter>,
}

impl ExternalSorter {
    pub fn new(budget: u64, scratch_dir: &Path) -> Result<Self, SortError> {
        if budget < MIN_BUDGET {
            return Err(SortError::BudgetTooSmall {
                budget,
                min: MIN_BUDGET,
            });
        }
        let records = ((budget - WRITE_BUFFER as u64) / RECORD_MEM) as usize;
        Self::with_run_records(budget, records, scratch_dir)
    }

    /// Like `new` with an explicit run length, used to force many runs.
    pub fn with_run_records(budget: u64, run_records: usize, scratch_dir: &Path) -> Result<Self, SortError> {
        std::fs::create_dir_all(scratch_dir)?;
        Ok(ExternalSorter {
            chunk: Vec::new(),
            chunk_records: run_records.max(1),
            scratch: tempfile::Builder::new().prefix("sweepdt-sort").tempdir_in(scratch_dir)?,
            runs: Vec::new(),
            len: 0,
            budget,
            meter: MemoryMeter::new(),
        })
    }

    pub fn meter(&self) -> Arc<MemoryMeter> {
        self.meter.clone()
    }

    pub fn len(&self) -> u64 {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn push(&mut self, r: SiteRecord) -> Result<(), SortError> {
        if self.chunk.len() == self.chunk_records {
            self.spill()?;
        }
        if self.chunk.len() == self.chunk.capacity() {
            let before = self.chunk.capacity();
            let want = (before * 2).max(1024).min(self.chunk_records) - before;
            self.chunk.reserve_exact(want);
            self.meter.alloc((self.chunk.capacity() - before) as u64 * RECORD_MEM);
        }
        self.chunk.push(r);
        self.len += 1;
        Ok(())
    }

    fn spill(&mut self) -> Result<(), SortError> {
        if self.chunk.is_empty() {
            return Ok(());
        }
        self.chunk.sort_unstable_by(SiteRecord::sweep_cmp);
        let path = self.scratch.path().join(format!("run-{:05}.bin", self.runs.len()));
        self.meter.alloc(WRITE_BUFFER as u64);
        let mut w = SiteWriter::new(BufWriter::with_capacity(WRITE_BUFFER, File::create(&path)?));
        for r in &self.chunk {
            w.write(r)?;
        }
        w.finish()?;
        self.meter.free(WRITE_BUFFER as u64);
        self.runs.push((path, self.chunk.len() as u64));
        self.chunk.clear();
        Ok(())
    }

    pub fn finish(mut self) -> Result<SortedRuns, SortError> {
        let meter = self.meter.clone();
        let runs = if self.runs.is_empty() {
            self.chunk.sort_unstable_by(SiteRecord::sweep_cmp);
            Runs::Memory(std::mem::take(&mut self.chunk))
        } else {
            self.spill()?;
            let freed = self.chunk.capacity() as u64 * RECORD_MEM;
            self.chunk = Vec::new();
            meter.free(freed);
            Runs::Files(std::mem::take(&mut self.runs))
        };
        Ok(SortedRuns {
            runs,
            len: self.len,
            budget: self.budget,
            meter,
            _scratch: self.scratch,
        })
    }
}

enum Runs {
    Memory(Vec<SiteRecord>),
    Files(Vec<(PathBuf, u64)>),
}

/// Sorted runs awaiting the merge.
pub struct SortedRuns {
    runs: Runs,
    len: u64,
    budget: u64,
    meter: Arc<MemoryMeter>,
    _scratch: tempfile::TempDir,
}

struct RunFile {
    file: File,
    len: u64,
}

impl RunFile {
    fn get(&mut self, i: u64) -> io::Result<SiteRecord> {
        let mut buf = [0u8; RECORD_BYTES];
        self.file.seek(SeekFrom::Start(i * RECORD_BYTES as u64))?;
        self.file.read_exact(&mut buf)?;
        Ok(SiteRecord::decode(&buf))
    }
}

/// Random access to the runs for selection.
enum Probe<'a> {
    Memory(&'a [SiteRecord]),
    Files(Vec<RunFile>),
}

impl Probe<'_> {
    fn count(&self) -> usize {
        match self {
            Probe::Memory(_) => 1,
            Probe::Files(f) => f.len(),
        }
    }

    fn len(&self, run: usize) -> u64 {
        match self {
            Probe::Memory(v) => v.len() as u64,
            Probe::Files(f) => f[run].len,
        }
    }

    fn get(&mut self, run: usize, i: u64) -> io::Result<SiteRecord> {
        match self {
            Probe::Memory(v) => Ok(v[i as usize]),
            Probe::Files(f) => f[run].get(i),
        }
    }

    /// First index in `[lo, hi)` of `run` whose record does not satisfy `pred`.
    fn partition_point(
        &mut self,
        run: usize,
        mut lo: u64,
        mut hi: u64,
        pred: impl Fn(&SiteRecord) -> bool,
    ) -> io::Result<u64> {
        while lo < hi {
            let mid = lo + (hi - lo) / 2;
            if pred(&self.get(run, mid)?) {
                lo = mid + 1;
            } else {
                hi = mid;
            }
        }
        Ok(lo)
    }
}

impl SortedRuns {
    pub fn len(&self) -> u64 {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn run_count(&self) -> usize {
        match &self.runs {
            Runs::Memory(_) => 1,
            Runs::Files(f) => f.len(),
        }
    }

    pub fn meter(&self) -> Arc<MemoryMeter> {
        self.meter.clone()
    }

    fn probe(&self) -> io::Result<Probe<'_>> {
        Ok(match &self.runs {
            Runs::Memory(v) => Probe::Memory(v),
            Runs::Files(f) => Probe::Files(
                f.iter()
                    .map(|(p, len)| Ok(RunFile { file: File::open(p)?, len: *len }))
                    .collect::<io::Result<_>>()?,
            ),
        })
    }

    /// The record at position `k` (0-based) of the merged order, found by
    /// binary searches over the runs without merging them.
    pub fn select(&self, k: u64) -> io::Result<SiteRecord> {
        if k >= self.len {
            return Err(io::Error::new(io::ErrorKind::InvalidInput, "selection index out of range"));
        }
        let mut probe = self.probe()?;
        let m = probe.count();
        let mut lo = vec![0u64; m];
        let mut hi: Vec<u64> = (0..m).map(|r| probe.len(r)).collect();
        let mut k = k;
        loop {
            let j = (0..m).max_by_key(|&r| (hi[r] - lo[r], std::cmp::Reverse(r))).unwrap();
            let pivot = probe.get(j, lo[j] + (hi[j] - lo[j]) / 2)?;
            let mut less = vec![0u64; m];
            let mut le = vec![0u64; m];
            for r in 0..m {
                less[r] = probe.partition_point(r, lo[r], hi[r], |x| x.sweep_cmp(&pivot) == Ordering::Less)?;
                le[r] = probe.partition_point(r, less[r], hi[r], |x| x.sweep_cmp(&pivot) != Ordering::Greater)?;
            }
            let n_less: u64 = (0..m).map(|r| less[r] - lo[r]).sum();
            let n_le: u64 = (0..m).map(|r| le[r] - lo[r]).sum();
            if k < n_less {
                hi = less;
            } else if k < n_le {
                return Ok(pivot);
            } else {
                k -= n_le;
                lo = le;
            }
        }
    }

    /// Stream the records in sorted order.
    pub fn merge(self) -> io::Result<SortedStream> {
        let SortedRuns {
            runs,
            len,
            budget,
            meter,
            _scratch,
        } = self;
        let (inner, held) = match runs {
            Runs::Memory(v) => {
                let held = v.capacity() as u64 * RECORD_MEM;
                (Stream::Memory(v.into_iter()), held)
            }
            Runs::Files(files) => {
                let k = files.len().max(1);
                let buf = ((budget as usize) / (2 * k)).clamp(MIN_READ_BUFFER, MAX_READ_BUFFER);
                let readers = files
                    .iter()
                    .map(|(p, _)| Ok(SiteReader::new(BufReader::with_capacity(buf, File::open(p)?))))
                    .collect::<io::Result<Vec<_>>>()?;
                let held = (buf * k) as u64;
                meter.alloc(held);
                let cmp: fn(&SiteRecord, &SiteRecord) -> Ordering = SiteRecord::sweep_cmp;
                (Stream::Files(LoserTree::new(readers, cmp)?), held)
            }
        };
        Ok(SortedStream {
            inner,
            remaining: len,
            held,
            meter,
            _scratch,
        })
    }
}

type FileMerge = LoserTree<SiteRecord, SiteReader<BufReader<File>>, fn(&SiteRecord, &SiteRecord) -> Ordering>;

enum Stream {
    Memory(std::vec::IntoIter<SiteRecord>),
    Files(FileMerge),
}

/// The merged output. Scratch files live until this is dropped.
pub struct SortedStream {
    inner: Stream,
    remaining: u64,
    held: u64,
    meter: Arc<MemoryMeter>,
    _scratch: tempfile::TempDir,
}

impl SortedStream {
    pub fn remaining(&self) -> u64 {
        self.remaining
    }
}

impl Iterator for SortedStream {
    type Item = io::Result<SiteRecord>;

    fn next(&mut self) -> Option<Self::Item> {
        let r = match &mut self.inner {
            Stream::Memory(it) => it.next().map(Ok),
            Stream::Files(t) => t.next(),
        };
        if let Some(Ok(_)) = r {
            self.remaining -= 1;
        }
        r
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        (self.remaining as usize, Some(self.remaining as usize))
    }
}

impl Drop for SortedStream {
    fn drop(&mut self) {
        self.meter.free(self.held);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SortReport {
    pub records: u64,
    pub runs: usize,
    pub budget: u64,
    /// High-water mark of metered sort buffers.
    pub peak_bytes: u64,
}

fn sort_file(input: &Path, output: &Path, mut sorter: ExternalSorter) -> Result<SortReport, SortError> {
    let budget = sorter.budget;
    for r in SiteReader::open(input)? {
        sorter.push(r?)?;
    }
    let runs = sorter.finish()?;
    let meter = runs.meter();
    let n_runs = runs.run_count();
    let mut w = SiteWriter::new(BufWriter::with_capacity(WRITE_BUFFER, File::create(output)?));
    meter.alloc(WRITE_BUFFER as u64);
    let mut records = 0;
    for r in runs.merge()? {
        w.write(&r?)?;
        records += 1;
    }
    w.finish()?;
    meter.free(WRITE_BUFFER as u64);
    Ok(SortReport {
        records,
        runs: n_runs,
        budget,
        peak_bytes: meter.peak(),
    })
}

/// Sort a binary site file into `output`, spilling runs under `scratch_dir`.
pub fn external_sort(input: &Path, output: &Path, budget: u64, scratch_dir: &Path) -> Result<SortReport, SortError> {
    sort_file(input, output, ExternalSorter::new(budget, scratch_dir)?)
}

/// `external_sort` with an explicit run length, for forcing many runs.
pub fn external_sort_with_runs(
    input: &Path,
    output: &Path,
    budget: u64,
    run_records: usize,
    scratch_dir: &Path,
) -> Result<SortReport, SortError> {
    sort_file(input, output, ExternalSorter::with_run_records(budget, run_records, scratch_dir)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Point3;
    use proptest::prelude::*;

    fn rec(id: u32, x: f64, y: f64, z: f64) -> SiteRecord {
        SiteRecord::new(id, Point3::new(x, y, z))
    }

    fn sorted_copy(v: &[SiteRecord]) -> Vec<SiteRecord> {
        let mut s = v.to_vec();
        s.sort_by(SiteRecord::sweep_cmp);
        s
    }

    fn run_sort(v: &[SiteRecord], run_records: usize) -> (Vec<SiteRecord>, SortReport) {
        let dir = tempfile::tempdir().unwrap();
        let (inp, out) = (dir.path().join("in.bin"), dir.path().join("out.bin"));
        write_sites(&inp, v).unwrap();
        let rep = external_sort_with_runs(&inp, &out, MIN_BUDGET, run_records, dir.path()).unwrap();
        (read_sites(&out).unwrap(), rep)
    }

    #[test]
    fn budget_floor() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(
            ExternalSorter::new(MIN_BUDGET - 1, dir.path()),
            Err(SortError::BudgetTooSmall { .. })
        ));
    }

    #[test]
    fn already_sorted_is_unchanged() {
        let v: Vec<SiteRecord> = (0..10).map(|i| rec(i, i as f64, 0.0, 0.0)).collect();
        assert_eq!(run_sort(&v, 3).0, v);
    }

    #[test]
    fn reverse_ten_records() {
        let v: Vec<SiteRecord> = (0..10).rev().map(|i| rec(i, i as f64, 1.0, 2.0)).collect();
        let (out, rep) = run_sort(&v, 4);
        assert_eq!(rep.runs, 3);
        assert_eq!(out.iter().map(|r| r.id).collect::<Vec<_>>(), (0..10).collect::<Vec<_>>());
    }

    #[test]
    fn ties_resolve_by_y_z_id() {
        let v = vec![rec(3, 1.0, 0.0, 0.0), rec(1, 1.0, 0.0, 0.0), rec(2, 1.0, -1.0, 5.0), rec(0, 1.0, 0.0, -1.0)];
        let (out, _) = run_sort(&v, 1);
        assert_eq!(out.iter().map(|r| r.id).collect::<Vec<_>>(), vec![2, 0, 1, 3]);
    }

    #[test]
    fn in_memory_path_and_select() {
        let dir = tempfile::tempdir().unwrap();
        let mut s = ExternalSorter::new(MIN_BUDGET, dir.path()).unwrap();
        for i in (0..100u32).rev() {
            s.push(rec(i, (i + 1) as f64, 0.0, 0.0)).unwrap();
        }
        let runs = s.finish().unwrap();
        assert_eq!(runs.run_count(), 1);
        assert_eq!(runs.select(2).unwrap().x, 3.0);
        assert_eq!(runs.select(97).unwrap().x, 98.0);
        assert!(runs.select(100).is_err());
        let all: Vec<f64> = runs.merge().unwrap().map(|r| r.unwrap().x).collect();
        assert_eq!(all, (1..=100).map(f64::from).collect::<Vec<_>>());
    }

    #[test]
    fn meter_tracks_peak_within_budget() {
        let dir = tempfile::tempdir().unwrap();
        let mut s = ExternalSorter::with_run_records(MIN_BUDGET, 1000, dir.path()).unwrap();
        for i in 0..5000u32 {
            s.push(rec(i, ((i * 7919) % 5000) as f64, 0.0, 0.0)).unwrap();
        }
        let meter = s.meter();
        let stream = s.finish().unwrap().merge().unwrap();
        assert!(meter.current() > 0);
        let n = stream.count();
        assert_eq!(n, 5000);
        assert_eq!(meter.current(), 0);
        assert!(meter.peak() <= MIN_BUDGET);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]
        #[test]
        fn matches_in_memory_sort(
            xs in prop::collection::vec((0u8..8, 0u8..4, 0u8..4), 0..200),
            run in 1usize..40,
        ) {
            let v: Vec<SiteRecord> = xs
                .iter()
                .enumerate()
                .map(|(i, &(x, y, z))| rec((i as u32).wrapping_mul(2654435761) >> 8, x as f64, y as f64, z as f64))
                .collect();
            let (out, rep) = run_sort(&v, run);
            prop_assert_eq!(&out, &sorted_copy(&v));
            prop_assert_eq!(rep.records, v.len() as u64);
        }

        #[test]
        fn select_matches_sorted_index(
            xs in prop::collection::vec(0u16..50, 1..300),
            run in 1usize..60,
            pick in any::<prop::sample::Index>(),
        ) {
            let dir = tempfile::tempdir().unwrap();
            let mut s = ExternalSorter::with_run_records(MIN_BUDGET, run, dir.path()).unwrap();
            let v: Vec<SiteRecord> = xs.iter().enumerate().map(|(i, &x)| rec(i as u32, x as f64, 0.0, 0.0)).collect();
            for r in &v {
                s.push(*r).unwrap();
            }
            let runs = s.finish().unwrap();
            let k = pick.index(v.len());
            prop_assert_eq!(runs.select(k as u64).unwrap(), sorted_copy(&v)[k]);
        }
    }
}
