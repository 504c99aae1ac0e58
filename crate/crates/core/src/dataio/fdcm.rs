//! FDCM binary matrix container.
//!
//! Layout: `b"FDCM"`, version `u16` LE (= 1), rows `u32` LE, cols `u32` LE,
//! then `rows * cols` `f64` LE values in row-major order.

use std::fs;
use std::path::Path;

use ndarray::Array2;

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"FDCM";
pub const VERSION: u16 = 1;
const HEADER_LEN: usize = 4 + 2 + 4 + 4;

pub fn encode_matrix(m: &Array2<f64>) -> Result<Vec<u8>> {
    let rows =
        u32::try_from(m.nrows()).map_err(|_| Error::Domain("too many rows for FDCM".into()))?;
    let cols =
        u32::try_from(m.ncols()).map_err(|_| Error::Domain("too many columns for FDCM".into()))?;
    let mut out = Vec::with_capacity(HEADER_LEN + m.len() * 8);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&rows.to_le_bytes());
    out.extend_from_slice(&cols.to_le_bytes());
    for v in m.iter() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}

pub fn decode_matrix(bytes: &[u8]) -> Result<Array2<f64>> {
    if bytes.len() < HEADER_LEN {
        return Err(Error::Parse(format!(
            "truncated FDCM header: expected {HEADER_LEN} bytes, found {}",
            bytes.len()
        )));
    }
    if &bytes[..4] != MAGIC {
        return Err(Error::Parse("bad magic: not an FDCM file".into()));
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != VERSION {
        return Err(Error::Parse(format!("unsupported FDCM version {version}")));
    }
    let rows = u32::from_le_bytes(bytes[6..10].try_into().unwrap()) as usize;
    let cols = u32::from_le_bytes(bytes[10..14].try_into().unwrap()) as usize;
    let payload = rows
        .checked_mul(cols)
        .and_then(|c| c.checked_mul(8))
        .ok_or_else(|| Error::Parse(format!("dimension overflow: {rows} x {cols}")))?;
    let body = &bytes[HEADER_LEN..];
    if body.len() != payload {
        let kind = if body.len() < payload {
            "truncated"
        } else {
            "oversized"
        };
        return Err(Error::Parse(format!(
            "{kind} FDCM payload: expected {payload} bytes, found {}",
            body.len()
        )));
    }
    let values: Vec<f64> = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    if let Some(at) = values.iter().position(|v| !v.is_finite()) {
        return Err(Error::Parse(format!(
            "non-finite value {} at row {}, column {}",
            values[at],
            at / cols + 1,
            at % cols + 1
        )));
    }
    Ok(Array2::from_shape_vec((rows, cols), values).expect("length checked"))
}

pub fn write_matrix(path: impl AsRef<Path>, m: &Array2<f64>) -> Result<()> {
    fs::write(path, encode_matrix(m)?)?;
    Ok(())
}

pub fn load_matrix(path: impl AsRef<Path>) -> Result<Array2<f64>> {
    let path = path.as_ref();
    let bytes = fs::read(path)?;
    decode_matrix(&bytes).map_err(|e| e.context(path.display().to_string()))
}

/// True if `bytes` starts with the FDCM magic.
pub fn is_fdcm(bytes: &[u8]) -> bool {
    bytes.starts_with(MAGIC)
}
