//! The `QTENSOR1` container: 8-byte ASCII magic, `u32` rank, `rank` × `u32`
//! dims, then row-major `f32` payload. All integers and floats are little-endian.

use std::fs;
use std::io::Write;
use std::path::Path;

use super::Matrix;
use crate::error::{QkitError, Result};

pub const TENSOR_MAGIC: &[u8; 8] = b"QTENSOR1";

pub fn encode_tensor(m: &Matrix) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + 12 + 4 * m.data().len());
    out.extend_from_slice(TENSOR_MAGIC);
    out.extend_from_slice(&2u32.to_le_bytes());
    out.extend_from_slice(&(m.rows() as u32).to_le_bytes());
    out.extend_from_slice(&(m.cols() as u32).to_le_bytes());
    for &v in m.data() {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
    out
}

fn read_u32(bytes: &[u8], at: usize) -> Result<u32> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_le_bytes(b.try_into().unwrap()))
        .ok_or_else(|| QkitError::Format(format!("truncated header at byte {at}")))
}

pub fn decode_tensor(bytes: &[u8]) -> Result<Matrix> {
    if bytes.len() < 8 || &bytes[..8] != TENSOR_MAGIC {
        return Err(QkitError::Format("bad magic, expected QTENSOR1".into()));
    }
    let rank = read_u32(bytes, 8)?;
    if rank != 2 {
        return Err(QkitError::Format(format!("unsupported rank {rank}, expected 2")));
    }
    let rows = read_u32(bytes, 12)? as usize;
    let cols = read_u32(bytes, 16)? as usize;
    let count = rows
        .checked_mul(cols)
        .and_then(|c| c.checked_mul(4).map(|b| (c, b)))
        .ok_or_else(|| QkitError::Format(format!("dimensions {rows}x{cols} overflow")))?;
    let payload = &bytes[20..];
    if payload.len() < count.1 {
        return Err(QkitError::Format(format!(
            "truncated payload: {rows}x{cols} needs {} bytes, found {}",
            count.1,
            payload.len()
        )));
    }
    if payload.len() > count.1 {
        return Err(QkitError::Format(format!("{} trailing bytes after payload", payload.len() - count.1)));
    }
    let data = payload.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64).collect();
    Matrix::new(rows, cols, data).map_err(|e| match e {
        QkitError::NonFinite { .. } => e,
        other => QkitError::Format(other.to_string()),
    })
}

pub fn read_tensor(path: impl AsRef<Path>) -> Result<Matrix> {
    decode_tensor(&fs::read(path)?)
}

/// Writes via a temporary sibling file and a rename.
pub fn write_tensor(path: impl AsRef<Path>, m: &Matrix) -> Result<()> {
    write_atomic(path.as_ref(), &encode_tensor(m))
}

pub(crate) fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let file_name =
        path.file_name().ok_or_else(|| QkitError::InvalidParam(format!("not a file path: {}", path.display())))?;
    let tmp = path.with_file_name(format!(".{}.tmp", file_name.to_string_lossy()));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}
