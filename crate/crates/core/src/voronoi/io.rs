use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::Path;

use super::{EdgeRecord, VolumeRecord};

pub const EDGE_BYTES: usize = 8;
pub const VOLUME_BYTES: usize = 12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum OutputFormat {
    #[default]
    Binary,
    Csv,
}

impl std::str::FromStr for OutputFormat {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "binary" | "bin" => Ok(OutputFormat::Binary),
            "csv" => Ok(OutputFormat::Csv),
            _ => Err(format!("unknown output format '{s}' (binary|csv)")),
        }
    }
}

/// Edge table: `(id_a, id_b)` little-endian u32 pairs, or `id_a,id_b` rows.
pub struct EdgeWriter<W: Write> {
    out: W,
    format: OutputFormat,
    count: u64,
}

impl EdgeWriter<BufWriter<File>> {
    pub fn create(path: &Path, format: OutputFormat) -> io::Result<Self> {
        Ok(EdgeWriter::new(BufWriter::with_capacity(1 << 16, File::create(path)?), format))
    }
}

impl<W: Write> EdgeWriter<W> {
    pub fn new(out: W, format: OutputFormat) -> Self {
        EdgeWriter { out, format, count: 0 }
    }

    pub fn write(&mut self, e: &EdgeRecord) -> io::Result<()> {
        self.count += 1;
        match self.format {
            OutputFormat::Binary => {
                let mut buf = [0u8; EDGE_BYTES];
                buf[..4].copy_from_slice(&e.a.to_le_bytes());
                buf[4..].copy_from_slice(&e.b.to_le_bytes());
                self.out.write_all(&buf)
            }
            OutputFormat::Csv => writeln!(self.out, "{},{}", e.a, e.b),
        }
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn finish(mut self) -> io::Result<W> {
        self.out.flush()?;
        Ok(self.out)
    }
}

/// Volume table: `(id: u32, volume: f64)` little-endian, or `id,volume` rows.
pub struct VolumeWriter<W: Write> {
    out: W,
    format: OutputFormat,
    count: u64,
}

impl VolumeWriter<BufWriter<File>> {
    pub fn create(path: &Path, format: OutputFormat) -> io::Result<Self> {
        Ok(VolumeWriter::new(BufWriter::with_capacity(1 << 16, File::create(path)?), format))
    }
}

impl<W: Write> VolumeWriter<W> {
    pub fn new(out: W, format: OutputFormat) -> Self {
        VolumeWriter { out, format, count: 0 }
    }

    pub fn write(&mut self, v: &VolumeRecord) -> io::Result<()> {
        self.count += 1;
        match self.format {
            OutputFormat::Binary => {
                let mut buf = [0u8; VOLUME_BYTES];
                buf[..4].copy_from_slice(&v.id.to_le_bytes());
                buf[4..].copy_from_slice(&v.volume.to_le_bytes());
                self.out.write_all(&buf)
            }
            OutputFormat::Csv => writeln!(self.out, "{},{:?}", v.id, v.volume),
        }
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn finish(mut self) -> io::Result<W> {
        self.out.flush()?;
        Ok(self.out)
    }
}

pub fn read_edges(path: &Path) -> io::Result<Vec<EdgeRecord>> {
    let bytes = std::fs::read(path)?;
    if bytes.len() % EDGE_BYTES != 0 {
        return Err(io::Error::new(io::ErrorKind::InvalidData, "truncated edge file"));
    }
    Ok(bytes
        .chunks_exact(EDGE_BYTES)
        .map(|c| EdgeRecord {
            a: u32::from_le_bytes(c[..4].try_into().unwrap()),
            b: u32::from_le_bytes(c[4..].try_into().unwrap()),
        })
        .collect())
}

pub fn read_volumes(path: &Path) -> io::Result<Vec<VolumeRecord>> {
    let bytes = std::fs::read(path)?;
    if bytes.len() % VOLUME_BYTES != 0 {
        return Err(io::Error::new(io::ErrorKind::InvalidData, "truncated volume file"));
    }
    Ok(bytes
        .chunks_exact(VOLUME_BYTES)
        .map(|c| VolumeRecord {
            id: u32::from_le_bytes(c[..4].try_into().unwrap()),
            volume: f64::from_le_bytes(c[4..].try_into().unwrap()),
        })
        .collect())
}
