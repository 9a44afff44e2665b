use std::io::{self, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::sweep::KernelStats;

/// One row of the online-geometry timeline.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StatsSample {
    pub sites_inserted: u64,
    pub sweep_x: f64,
    pub online_tetrahedra: u64,
    pub evicted_total: u64,
    pub resident_bytes: u64,
}

impl From<&KernelStats> for StatsSample {
    fn from(s: &KernelStats) -> Self {
        StatsSample {
            sites_inserted: s.sites_inserted,
            sweep_x: s.sweep_x,
            online_tetrahedra: s.online_tetrahedra,
            evicted_total: s.evicted_total,
            resident_bytes: s.resident_bytes,
        }
    }
}

fn csv_err(e: csv::Error) -> io::Error {
    io::Error::new(io::ErrorKind::InvalidData, e)
}

/// Timeline CSV writer. The header is written up front, so an empty run
/// leaves a header-only file.
pub struct StatsWriter<W: Write> {
    out: csv::Writer<W>,
}

impl<W: Write> StatsWriter<W> {
    pub fn new(out: W) -> io::Result<Self> {
        let mut out = csv::WriterBuilder::new().has_headers(false).from_writer(out);
        out.write_record(["sites_inserted", "sweep_x", "online_tetrahedra", "evicted_total", "resident_bytes"])
            .map_err(csv_err)?;
        Ok(StatsWriter { out })
    }

    pub fn push(&mut self, s: &StatsSample) -> io::Result<()> {
        self.out.serialize(s).map_err(csv_err)
    }

    pub fn finish(self) -> io::Result<W> {
        self.out.into_inner().map_err(|e| e.into_error())
    }
}

/// Write a whole timeline to `path`.
pub fn emit_stats(path: &Path, samples: impl IntoIterator<Item = StatsSample>) -> io::Result<()> {
    let mut w = StatsWriter::new(io::BufWriter::new(std::fs::File::create(path)?))?;
    for s in samples {
        w.push(&s)?;
    }
    w.finish()?.flush()
}

pub fn read_stats(path: &Path) -> io::Result<Vec<StatsSample>> {
    let mut r = csv::Reader::from_path(path).map_err(csv_err)?;
    r.deserialize().map(|row| row.map_err(csv_err)).collect()
}

/// At most `bins` rows, keeping the last sample in each equal-width bin of
/// `sites_inserted`. The final sample is always kept.
pub fn resample(samples: &[StatsSample], bins: usize) -> Vec<StatsSample> {
    let Some(last) = samples.last() else {
        return Vec::new();
    };
    let bins = bins.max(1);
    let total = last.sites_inserted.max(1);
    let mut out: Vec<StatsSample> = Vec::new();
    let mut current_bin = None;
    for s in samples {
        let b = ((s.sites_inserted as u128 * bins as u128) / (total as u128 + 1)) as usize;
        if current_bin == Some(b) {
            *out.last_mut().unwrap() = *s;
        } else {
            out.push(*s);
            current_bin = Some(b);
        }
    }
    if out.last() != Some(last) {
        out.push(*last);
    }
    out
}

/// Median of `online_tetrahedra` over samples whose `sites_inserted` lies
/// in `[lo, hi]` of the final count, and the largest relative deviation
/// from it there.
pub fn plateau(samples: &[StatsSample], lo: f64, hi: f64) -> Option<(f64, f64)> {
    let total = samples.last()?.sites_inserted as f64;
    let mut mid: Vec<f64> = samples
        .iter()
        .filter(|s| {
            let f = s.sites_inserted as f64 / total;
            f >= lo && f <= hi
        })
        .map(|s| s.online_tetrahedra as f64)
        .collect();
    if mid.is_empty() {
        return None;
    }
    mid.sort_by(f64::total_cmp);
    let median = if mid.len() % 2 == 1 {
        mid[mid.len() / 2]
    } else {
        (mid[mid.len() / 2 - 1] + mid[mid.len() / 2]) / 2.0
    };
    let dev = mid.iter().map(|v| (v / median - 1.0).abs()).fold(0.0, f64::max);
    Some((median, dev))
}
