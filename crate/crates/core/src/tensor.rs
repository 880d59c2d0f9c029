//! STF1 tensor files.
//!
//! Layout: magic `STF1`, one dtype byte (1 = f32 little-endian), one rank
//! byte, `rank` little-endian u32 dimensions, then the row-major payload.

use std::fs;
use std::io::Write;
use std::path::Path;

use ndarray::{Array2, ArrayD, IxDyn};

use crate::error::{Error, Result};

pub const MAGIC: [u8; 4] = *b"STF1";
pub const DTYPE_F32: u8 = 1;

/// Serializes an f32 tensor to STF1 bytes.
pub fn encode(tensor: &ArrayD<f32>) -> Result<Vec<u8>> {
    let shape = tensor.shape();
    if shape.len() > u8::MAX as usize {
        return Err(Error::Format(format!("rank {} too large", shape.len())));
    }
    let mut out = Vec::with_capacity(6 + 4 * shape.len() + 4 * tensor.len());
    out.extend_from_slice(&MAGIC);
    out.push(DTYPE_F32);
    out.push(shape.len() as u8);
    for &d in shape {
        let d = u32::try_from(d).map_err(|_| Error::Format(format!("dimension {d} exceeds u32")))?;
        out.extend_from_slice(&d.to_le_bytes());
    }
    // iter() walks logical (row-major) order even for non-standard layouts
    for v in tensor.iter() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}

/// Parses STF1 bytes.
pub fn decode(bytes: &[u8]) -> Result<ArrayD<f32>> {
    if bytes.len() < 6 || bytes[0..4] != MAGIC {
        return Err(Error::Format("missing STF1 magic".into()));
    }
    if bytes[4] != DTYPE_F32 {
        return Err(Error::Format(format!("unsupported dtype code {}", bytes[4])));
    }
    let rank = bytes[5] as usize;
    let header = 6 + 4 * rank;
    if bytes.len() < header {
        return Err(Error::Format("truncated STF1 header".into()));
    }
    let dims: Vec<usize> = bytes[6..header]
        .chunks_exact(4)
        .map(|c| u32::from_le_bytes([c[0], c[1], c[2], c[3]]) as usize)
        .collect();
    let count = dims
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .ok_or_else(|| Error::Format("STF1 element count overflows".into()))?;
    let payload = &bytes[header..];
    if payload.len() != count * 4 {
        return Err(Error::Format(format!(
            "STF1 payload has {} bytes, expected {}",
            payload.len(),
            count * 4
        )));
    }
    let data: Vec<f32> = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    ArrayD::from_shape_vec(IxDyn(&dims), data).map_err(|e| Error::Format(e.to_string()))
}

pub fn write(path: &Path, tensor: &ArrayD<f32>) -> Result<()> {
    let bytes = encode(tensor)?;
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&bytes).map_err(|e| Error::io(path, e))
}

pub fn read(path: &Path) -> Result<ArrayD<f32>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes)
}

/// Writes a 2D f64 grid, narrowing to f32.
pub fn write_grid(path: &Path, grid: &Array2<f64>) -> Result<()> {
    write(path, &grid.mapv(|v| v as f32).into_dyn())
}

/// Reads a rank-2 tensor as an f64 grid.
pub fn read_grid(path: &Path) -> Result<Array2<f64>> {
    let t = read(path)?;
    if t.ndim() != 2 {
        return Err(Error::Format(format!(
            "{}: expected rank-2 tensor, found rank {}",
            path.display(),
            t.ndim()
        )));
    }
    let t = t
        .into_dimensionality::<ndarray::Ix2>()
        .map_err(|e| Error::Format(e.to_string()))?;
    Ok(t.mapv(f64::from))
}
