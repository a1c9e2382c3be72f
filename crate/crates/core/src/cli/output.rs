//! On-disk artifacts: `energy.csv`, binary snapshots and the run lock.
//!
//! Every file is written under a `.partial` name and renamed into place once
//! complete.

use std::fs::{self, File, OpenOptions};
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::field::{Grid3, VectorField};

pub const CSV_COLUMNS: [&str; 15] = [
    "t",
    "exchange",
    "anisotropy",
    "maxwell_h",
    "maxwell_e",
    "surf_anis",
    "superexch_q",
    "superexch_biq",
    "penalty",
    "total",
    "dissipation_integral",
    "ohmic_integral",
    "source_integral",
    "saturation_dev",
    "divergence_drift",
];

pub const SNAPSHOT_MAGIC: &[u8; 16] = b"SPINLAYER-SNAP01";
const HEADER_LEN: usize = 16 + 4 + 4 + 3 * 8 + 3 * 8 + 8;

/// Identifies what a snapshot holds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u32)]
pub enum FieldId {
    Magnetization = 0,
    CellField = 1,
    FaceX = 2,
    FaceY = 3,
    FaceZ = 4,
    EdgeX = 5,
    EdgeY = 6,
    EdgeZ = 7,
}

impl FieldId {
    fn from_u32(v: u32) -> Option<Self> {
        use FieldId::*;
        [Magnetization, CellField, FaceX, FaceY, FaceZ, EdgeX, EdgeY, EdgeZ].into_iter().find(|f| *f as u32 == v)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub field: FieldId,
    pub ncomp: u32,
    pub dims: [usize; 3],
    pub spacing: [f64; 3],
    pub t: f64,
    /// Row-major, x fastest, components interleaved.
    pub data: Vec<f64>,
}

impl Snapshot {
    pub fn from_vector(field: FieldId, v: &VectorField, spacing: [f64; 3], t: f64) -> Self {
        Self { field, ncomp: 3, dims: v.dims(), spacing, t, data: v.data().iter().flatten().copied().collect() }
    }

    pub fn from_scalar(field: FieldId, g: &Grid3, spacing: [f64; 3], t: f64) -> Self {
        Self { field, ncomp: 1, dims: g.dims, spacing, t, data: g.data.clone() }
    }

    pub fn to_vector(&self) -> Result<VectorField> {
        if self.ncomp != 3 {
            return Err(Error::Snapshot { path: PathBuf::new(), reason: format!("expected 3 components, found {}", self.ncomp) });
        }
        VectorField::from_vec(self.dims, self.data.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect())
    }

    pub fn to_scalar(&self) -> Result<Grid3> {
        if self.ncomp != 1 {
            return Err(Error::Snapshot { path: PathBuf::new(), reason: format!("expected 1 component, found {}", self.ncomp) });
        }
        Ok(Grid3 { dims: self.dims, data: self.data.clone() })
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN + 8 * self.data.len());
        out.extend_from_slice(SNAPSHOT_MAGIC);
        out.extend_from_slice(&(self.field as u32).to_le_bytes());
        out.extend_from_slice(&self.ncomp.to_le_bytes());
        for d in self.dims {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for h in self.spacing {
            out.extend_from_slice(&h.to_le_bytes());
        }
        out.extend_from_slice(&self.t.to_le_bytes());
        for x in &self.data {
            out.extend_from_slice(&x.to_le_bytes());
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> std::result::Result<Self, String> {
        if bytes.len() < HEADER_LEN || &bytes[..16] != SNAPSHOT_MAGIC {
            return Err("missing snapshot magic".into());
        }
        let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
        let u64_at = |o: usize| u64::from_le_bytes(bytes[o..o + 8].try_into().unwrap());
        let f64_at = |o: usize| f64::from_le_bytes(bytes[o..o + 8].try_into().unwrap());
        let field = FieldId::from_u32(u32_at(16)).ok_or("unknown field id")?;
        let ncomp = u32_at(20);
        let dims = [u64_at(24) as usize, u64_at(32) as usize, u64_at(40) as usize];
        let spacing = [f64_at(48), f64_at(56), f64_at(64)];
        let t = f64_at(72);
        let count = dims.iter().product::<usize>() * ncomp as usize;
        if bytes.len() != HEADER_LEN + 8 * count {
            return Err(format!("expected {} payload values, file has {} bytes", count, bytes.len() - HEADER_LEN));
        }
        let data = bytes[HEADER_LEN..].chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
        Ok(Self { field, ncomp, dims, spacing, t, data })
    }
}

fn partial_path(path: &Path) -> PathBuf {
    let mut name = path.file_name().unwrap_or_default().to_os_string();
    name.push(".partial");
    path.with_file_name(name)
}

/// Writes `bytes` to `path` via a `.partial` file and rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = partial_path(path);
    let mut f = File::create(&tmp)?;
    f.write_all(bytes)?;
    f.sync_all()?;
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn write_snapshot(path: &Path, snap: &Snapshot) -> Result<()> {
    write_atomic(path, &snap.encode())
}

pub fn read_snapshot(path: &Path) -> Result<Snapshot> {
    let mut bytes = Vec::new();
    File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::Snapshot { path: path.to_owned(), reason: e.to_string() })?;
    Snapshot::decode(&bytes).map_err(|reason| Error::Snapshot { path: path.to_owned(), reason })
}

/// Formats one row with round-trip precision.
pub fn format_row(values: &[f64; 15]) -> String {
    values.iter().map(|v| format!("{v:.16e}")).collect::<Vec<_>>().join(",")
}

/// Streams rows into `energy.csv.partial`; [`CsvWriter::finish`] renames it.
pub struct CsvWriter {
    path: PathBuf,
    out: BufWriter<File>,
}

impl CsvWriter {
    pub fn create(path: &Path) -> Result<Self> {
        let mut out = BufWriter::new(File::create(partial_path(path))?);
        writeln!(out, "{}", CSV_COLUMNS.join(","))?;
        Ok(Self { path: path.to_owned(), out })
    }

    pub fn row(&mut self, values: &[f64; 15]) -> Result<()> {
        writeln!(self.out, "{}", format_row(values))?;
        Ok(())
    }

    pub fn finish(self) -> Result<()> {
        let file = self.out.into_inner().map_err(|e| e.into_error())?;
        file.sync_all()?;
        fs::rename(partial_path(&self.path), &self.path)?;
        Ok(())
    }
}

/// Exclusive claim on an output directory, released on drop.
#[derive(Debug)]
pub struct RunLock {
    path: PathBuf,
}

impl RunLock {
    pub fn acquire(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir)?;
        let path = dir.join(".lock");
        match OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(mut f) => {
                writeln!(f, "{}", std::process::id())?;
                Ok(Self { path })
            }
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => Err(Error::Locked(dir.to_owned())),
            Err(e) => Err(e.into()),
        }
    }
}

impl Drop for RunLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn snapshot_round_trip() {
        let v = VectorField::from_fn([3, 2, 2], |i, j, k| [i as f64, -(j as f64) * 0.1, k as f64 + 1e-17]);
        let s = Snapshot::from_vector(FieldId::Magnetization, &v, [0.5, 0.25, 1.0], 3.5);
        let bytes = s.encode();
        assert_eq!(&bytes[..16], SNAPSHOT_MAGIC);
        assert_eq!(bytes.len(), 80 + 8 * 36);
        let back = Snapshot::decode(&bytes).unwrap();
        assert_eq!(back, s);
        assert_eq!(back.to_vector().unwrap(), v);
    }

    #[test]
    fn truncated_snapshot_is_rejected() {
        let s = Snapshot::from_scalar(FieldId::FaceX, &Grid3::zeros([2, 2, 2]), [1.0; 3], 0.0);
        let bytes = s.encode();
        assert!(Snapshot::decode(&bytes[..bytes.len() - 1]).is_err());
        assert!(Snapshot::decode(b"not a snapshot").is_err());
    }

    #[test]
    fn rows_round_trip_exactly() {
        let vals: [f64; 15] = std::array::from_fn(|n| (n as f64 + 0.1).sqrt() * 1e-7 * (-1f64).powi(n as i32));
        let row = format_row(&vals);
        let back: Vec<f64> = row.split(',').map(|s| s.parse().unwrap()).collect();
        assert_eq!(back, vals.to_vec());
    }

    #[test]
    fn csv_is_partial_until_finished() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("energy.csv");
        let mut w = CsvWriter::create(&path).unwrap();
        w.row(&[0.0; 15]).unwrap();
        assert!(!path.exists());
        w.finish().unwrap();
        assert!(path.exists() && !dir.path().join("energy.csv.partial").exists());
        assert_eq!(fs::read_to_string(&path).unwrap().lines().count(), 2);
    }

    #[test]
    fn lock_is_exclusive() {
        let dir = tempfile::tempdir().unwrap();
        let lock = RunLock::acquire(dir.path()).unwrap();
        assert!(matches!(RunLock::acquire(dir.path()), Err(Error::Locked(_))));
        drop(lock);
        RunLock::acquire(dir.path()).unwrap();
    }
}
