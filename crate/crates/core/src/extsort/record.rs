//! The binary site table: little-endian, fixed 28-byte records
//! `(id: u32, x: f64, y: f64, z: f64)`, no header.

use std::cmp::Ordering;
use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::geometry::Point3;

pub const RECORD_BYTES: usize = 28;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SiteRecord {
    pub id: u32,
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl SiteRecord {
    pub fn new(id: u32, p: Point3) -> Self {
        SiteRecord {
            id,
            x: p.x,
            y: p.y,
            z: p.z,
        }
    }

    pub fn point(&self) -> Point3 {
        Point3::new(self.x, self.y, self.z)
    }

    pub fn is_finite(&self) -> bool {
        self.point().is_finite()
    }

    /// Sweep order: x, then y, z and id as tie-breaks.
    pub fn sweep_cmp(&self, o: &SiteRecord) -> Ordering {
        self.x
            .total_cmp(&o.x)
            .then(self.y.total_cmp(&o.y))
            .then(self.z.total_cmp(&o.z))
            .then(self.id.cmp(&o.id))
    }

    pub fn encode(&self, buf: &mut [u8; RECORD_BYTES]) {
        buf[0..4].copy_from_slice(&self.id.to_le_bytes());
        buf[4..12].copy_from_slice(&self.x.to_le_bytes());
        buf[12..20].copy_from_slice(&self.y.to_le_bytes());
        buf[20..28].copy_from_slice(&self.z.to_le_bytes());
    }

    pub fn decode(buf: &[u8; RECORD_BYTES]) -> Self {
        let f = |r: std::ops::Range<usize>| f64::from_le_bytes(buf[r].try_into().unwrap());
        SiteRecord {
            id: u32::from_le_bytes(buf[0..4].try_into().unwrap()),
            x: f(4..12),
            y: f(12..20),
            z: f(20..28),
        }
    }
}

/// Streams records out of any reader. A trailing partial record is an error.
pub struct SiteReader<R> {
    inner: R,
}

impl SiteReader<BufReader<File>> {
    pub fn open(path: &Path) -> io::Result<Self> {
        let f = File::open(path)?;
        let len = f.metadata()?.len();
        if len % RECORD_BYTES as u64 != 0 {
            return Err(io::Error::new(
                io::ErrorKind::InvalidData,
                format!("{}: size {len} is not a multiple of {RECORD_BYTES}", path.display()),
            ));
        }
        Ok(SiteReader::new(BufReader::with_capacity(1 << 16, f)))
    }
}

impl<R: Read> SiteReader<R> {
    pub fn new(inner: R) -> Self {
        SiteReader { inner }
    }

    pub fn read_record(&mut self) -> io::Result<Option<SiteRecord>> {
        let mut buf = [0u8; RECORD_BYTES];
        let mut filled = 0;
        while filled < RECORD_BYTES {
            match self.inner.read(&mut buf[filled..]) {
                Ok(0) => break,
                Ok(n) => filled += n,
                Err(e) if e.kind() == io::ErrorKind::Interrupted => continue,
                Err(e) => return Err(e),
            }
        }
        match filled {
            0 => Ok(None),
            RECORD_BYTES => Ok(Some(SiteRecord::decode(&buf))),
            _ => Err(io::Error::new(io::ErrorKind::UnexpectedEof, "truncated site record")),
        }
    }
}

impl<R: Read> Iterator for SiteReader<R> {
    type Item = io::Result<SiteRecord>;

    fn next(&mut self) -> Option<Self::Item> {
        self.read_record().transpose()
    }
}

pub struct SiteWriter<W: Write> {
    inner: W,
    written: u64,
}

impl SiteWriter<BufWriter<File>> {
    pub fn create(path: &Path) -> io::Result<Self> {
        Ok(SiteWriter::new(BufWriter::with_capacity(1 << 16, File::create(path)?)))
    }
}

impl<W: Write> SiteWriter<W> {
    pub fn new(inner: W) -> Self {
        SiteWriter { inner, written: 0 }
    }

    pub fn write(&mut self, r: &SiteRecord) -> io::Result<()> {
        let mut buf = [0u8; RECORD_BYTES];
        r.encode(&mut buf);
        self.written += 1;
        self.inner.write_all(&buf)
    }

    pub fn written(&self) -> u64 {
        self.written
    }

    pub fn finish(mut self) -> io::Result<W> {
        self.inner.flush()?;
        Ok(self.inner)
    }
}

pub fn read_sites(path: &Path) -> io::Result<Vec<SiteRecord>> {
    SiteReader::open(path)?.collect()
}

pub fn write_sites(path: &Path, sites: &[SiteRecord]) -> io::Result<()> {
    let mut w = SiteWriter::create(path)?;
    for s in sites {
        w.write(s)?;
    }
    w.finish()?;
    Ok(())
}

/// Convert `id,x,y,z` text rows to the binary format. A first row that does
/// not parse is taken as a header. Returns the number of records written.
pub fn csv_to_binary(csv_path: &Path, out: &Path) -> io::Result<u64> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_path(csv_path)
        .map_err(io::Error::other)?;
    let mut w = SiteWriter::create(out)?;
    for (line, row) in rdr.records().enumerate() {
        let row = row.map_err(io::Error::other)?;
        match parse_row(&row) {
            Some(rec) => w.write(&rec)?,
            None if line == 0 => continue,
            None => {
                return Err(io::Error::new(
                    io::ErrorKind::InvalidData,
                    format!("{}: bad row {}: {:?}", csv_path.display(), line + 1, row),
                ))
            }
        }
    }
    let n = w.written();
    w.finish()?;
    Ok(n)
}

fn parse_row(row: &csv::StringRecord) -> Option<SiteRecord> {
    if row.len() != 4 {
        return None;
    }
    let id = row[0].parse::<u32>().ok()?;
    let x = row[1].parse::<f64>().ok()?;
    let y = row[2].parse::<f64>().ok()?;
    let z = row[3].parse::<f64>().ok()?;
    Some(SiteRecord { id, x, y, z })
}
