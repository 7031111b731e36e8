//! On-disk kernel matrix cache.
//!
//! Layout (little-endian): magic `QKRN`, `u32` version (1), `u8` kind
//! (0 train-train, 1 eval-train), `u64` rows, `u64` cols, then `rows * cols`
//! row-major `f64` values.

use std::fs;
use std::io::{self, Read, Write};
use std::path::Path;

use thiserror::Error;

use crate::krr::{KernelMatrix, KrrError, MatrixKind};

pub const MAGIC: &[u8; 4] = b"QKRN";
pub const VERSION: u32 = 1;
const HEADER_LEN: usize = 4 + 4 + 1 + 8 + 8;

#[derive(Debug, Error)]
pub enum CacheError {
    #[error("i/o error on kernel cache: {0}")]
    Io(#[from] io::Error),
    #[error("kernel cache is corrupt: {0}")]
    CacheCorrupt(String),
    #[error(transparent)]
    Matrix(#[from] KrrError),
}

pub fn encode(matrix: &KernelMatrix) -> Vec<u8> {
    let mut buf = Vec::with_capacity(HEADER_LEN + 8 * matrix.rows() * matrix.cols());
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.push(matrix.kind().code());
    buf.extend_from_slice(&(matrix.rows() as u64).to_le_bytes());
    buf.extend_from_slice(&(matrix.cols() as u64).to_le_bytes());
    for v in matrix.to_row_major() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    buf
}

pub fn decode(bytes: &[u8], source: &str) -> Result<KernelMatrix, CacheError> {
    if bytes.len() < HEADER_LEN {
        return Err(CacheError::CacheCorrupt(format!(
            "{} bytes is shorter than the header",
            bytes.len()
        )));
    }
    if &bytes[0..4] != MAGIC {
        return Err(CacheError::CacheCorrupt("bad magic bytes".into()));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != VERSION {
        return Err(CacheError::CacheCorrupt(format!("unsupported version {version}")));
    }
    let kind = MatrixKind::from_code(bytes[8])
        .ok_or_else(|| CacheError::CacheCorrupt(format!("unknown kind {}", bytes[8])))?;
    let rows = u64::from_le_bytes(bytes[9..17].try_into().unwrap());
    let cols = u64::from_le_bytes(bytes[17..25].try_into().unwrap());
    let count = rows
        .checked_mul(cols)
        .and_then(|c| c.checked_mul(8))
        .ok_or_else(|| CacheError::CacheCorrupt("dimension overflow".into()))?;
    let payload = &bytes[HEADER_LEN..];
    if payload.len() as u64 != count {
        return Err(CacheError::CacheCorrupt(format!(
            "payload has {} bytes, header promises {count}",
            payload.len()
        )));
    }
    let values: Vec<f64> = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok(KernelMatrix::from_row_major(
        kind,
        source,
        rows as usize,
        cols as usize,
        &values,
    )?)
}

/// Writes via a temporary file and rename so readers never see a partial
/// matrix.
pub fn write_kernel_matrix(path: &Path, matrix: &KernelMatrix) -> Result<(), CacheError> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    let tmp = path.with_extension("qkrn.tmp");
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(&encode(matrix))?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn read_kernel_matrix(path: &Path, source: &str) -> Result<KernelMatrix, CacheError> {
    let mut bytes = Vec::new();
    fs::File::open(path)?.read_to_end(&mut bytes)?;
    decode(&bytes, source)
}
