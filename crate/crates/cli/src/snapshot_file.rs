//! Binary snapshot files and CSV ingestion.
//!
//! Layout: `SDMD`, u32 version, u8 dtype (1 = f64, 2 = f32), u64 rows,
//! u64 columns, then the column-major payload. Everything is little-endian.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use nalgebra::DMatrix;

use crate::error::CliError;

pub const MAGIC: &[u8; 4] = b"SDMD";
pub const VERSION: u32 = 1;
const HEADER_LEN: usize = 4 + 4 + 1 + 8 + 8;

/// Scalar width of the payload.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Dtype {
    F64,
    F32,
}

impl Dtype {
    fn code(self) -> u8 {
        match self {
            Dtype::F64 => 1,
            Dtype::F32 => 2,
        }
    }

    fn width(self) -> usize {
        match self {
            Dtype::F64 => 8,
            Dtype::F32 => 4,
        }
    }

    fn from_code(code: u8) -> Result<Self, CliError> {
        match code {
            1 => Ok(Dtype::F64),
            2 => Ok(Dtype::F32),
            other => Err(CliError::Data(format!("unknown dtype code {other}"))),
        }
    }
}

/// Writes the matrix columns as snapshots. `F32` rounds each entry.
pub fn write_snapshots(path: &Path, data: &DMatrix<f64>, dtype: Dtype) -> Result<(), CliError> {
    let file = File::create(path).map_err(|e| CliError::io(path, e))?;
    let mut w = BufWriter::new(file);
    let (m, n) = data.shape();
    let mut header = Vec::with_capacity(HEADER_LEN);
    header.extend_from_slice(MAGIC);
    header.extend_from_slice(&VERSION.to_le_bytes());
    header.push(dtype.code());
    header.extend_from_slice(&(m as u64).to_le_bytes());
    header.extend_from_slice(&(n as u64).to_le_bytes());
    w.write_all(&header).map_err(|e| CliError::io(path, e))?;
    // nalgebra storage is column-major already
    for &v in data.as_slice() {
        let res = match dtype {
            Dtype::F64 => w.write_all(&v.to_le_bytes()),
            Dtype::F32 => w.write_all(&(v as f32).to_le_bytes()),
        };
        res.map_err(|e| CliError::io(path, e))?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

/// Reads a snapshot file, widening `f32` payloads to `f64`.
pub fn read_snapshots(path: &Path) -> Result<(DMatrix<f64>, Dtype), CliError> {
    let mut bytes = Vec::new();
    File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| CliError::io(path, e))?;
    parse_snapshots(&bytes)
}

pub fn parse_snapshots(bytes: &[u8]) -> Result<(DMatrix<f64>, Dtype), CliError> {
    if bytes.len() < HEADER_LEN {
        return Err(CliError::Data(format!(
            "file holds {} bytes, shorter than the header",
            bytes.len()
        )));
    }
    if &bytes[0..4] != MAGIC {
        return Err(CliError::Data("missing SDMD magic".into()));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes"));
    if version != VERSION {
        return Err(CliError::Data(format!("unsupported version {version}")));
    }
    let dtype = Dtype::from_code(bytes[8])?;
    let m = u64::from_le_bytes(bytes[9..17].try_into().expect("8 bytes"));
    let n = u64::from_le_bytes(bytes[17..25].try_into().expect("8 bytes"));
    let count = m
        .checked_mul(n)
        .and_then(|c| usize::try_from(c).ok())
        .ok_or_else(|| CliError::Data(format!("shape {m}x{n} overflows")))?;
    let payload = &bytes[HEADER_LEN..];
    let want = count
        .checked_mul(dtype.width())
        .ok_or_else(|| CliError::Data("payload size overflows".into()))?;
    if payload.len() != want {
        return Err(CliError::Data(format!(
            "payload holds {} bytes, header promises {want} ({m}x{n} of width {})",
            payload.len(),
            dtype.width()
        )));
    }
    let values: Vec<f64> = match dtype {
        Dtype::F64 => payload
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect(),
        Dtype::F32 => payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64)
            .collect(),
    };
    Ok((DMatrix::from_vec(m as usize, n as usize, values), dtype))
}

/// One snapshot per line, comma-separated. Blank lines and `#` comments are skipped.
pub fn read_csv(path: &Path) -> Result<DMatrix<f64>, CliError> {
    let file = File::open(path).map_err(|e| CliError::io(path, e))?;
    let mut cols: Vec<Vec<f64>> = Vec::new();
    for (lineno, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| CliError::io(path, e))?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let row: Vec<f64> = line
            .split(',')
            .map(|t| t.trim().parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|e| CliError::Data(format!("{}:{}: {e}", path.display(), lineno + 1)))?;
        if let Some(first) = cols.first() {
            if first.len() != row.len() {
                return Err(CliError::Data(format!(
                    "{}:{}: snapshot has {} entries, expected {}",
                    path.display(),
                    lineno + 1,
                    row.len(),
                    first.len()
                )));
            }
        }
        cols.push(row);
    }
    let m = cols.first().map_or(0, Vec::len);
    if m == 0 {
        return Err(CliError::Data(format!(
            "{} holds no snapshots",
            path.display()
        )));
    }
    Ok(DMatrix::from_fn(m, cols.len(), |i, j| cols[j][i]))
}

/// Reads either format, choosing CSV by the `.csv` extension.
pub fn read_any(path: &Path) -> Result<DMatrix<f64>, CliError> {
    let is_csv = path
        .extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("csv"));
    if is_csv {
        read_csv(path)
    } else {
        read_snapshots(path).map(|(m, _)| m)
    }
}
