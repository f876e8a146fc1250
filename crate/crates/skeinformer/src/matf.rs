//! MATF on-disk matrix format.
//!
//! Layout, with no alignment padding:
//!
//! ```text
//! bytes 0..4   magic, ASCII "MATF"
//! bytes 4..8   row count, little-endian u32
//! bytes 8..12  column count, little-endian u32
//! bytes 12..   rows*cols IEEE-754 float64, little endian, row-major
//! ```
//!
//! `read_matrix(write_matrix(m))` is the identity bit for bit. Non-finite
//! entries are rejected on read with the byte offset of the offending value.

use crate::error::{Error, Result};
use crate::matrix::DenseMatrix;
use std::fs;
use std::path::Path;

pub const MATF_MAGIC: [u8; 4] = *b"MATF";
const HEADER_LEN: usize = 12;

pub fn write_matrix(path: impl AsRef<Path>, m: &DenseMatrix) -> Result<()> {
    let rows = u32::try_from(m.rows())
        .map_err(|_| Error::invalid("row count exceeds u32 range"))?;
    let cols = u32::try_from(m.cols())
        .map_err(|_| Error::invalid("column count exceeds u32 range"))?;
    let mut bytes = Vec::with_capacity(HEADER_LEN + m.data().len() * 8);
    bytes.extend_from_slice(&MATF_MAGIC);
    bytes.extend_from_slice(&rows.to_le_bytes());
    bytes.extend_from_slice(&cols.to_le_bytes());
    for value in m.data() {
        bytes.extend_from_slice(&value.to_le_bytes());
    }
    fs::write(path, bytes)?;
    Ok(())
}

pub fn read_matrix(path: impl AsRef<Path>) -> Result<DenseMatrix> {
    let path = path.as_ref();
    let bytes = fs::read(path)?;
    let format_err = |offset: usize, reason: String| Error::Format {
        path: path.to_path_buf(),
        offset: offset as u64,
        reason,
    };

    if bytes.len() < 4 || bytes[0..4] != MATF_MAGIC {
        return Err(format_err(0, "bad magic, expected \"MATF\"".into()));
    }
    if bytes.len() < HEADER_LEN {
        return Err(format_err(bytes.len(), "truncated header".into()));
    }
    let rows = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    let cols = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let count = rows
        .checked_mul(cols)
        .ok_or_else(|| format_err(4, format!("shape {rows}x{cols} overflows")))?;
    let expected = HEADER_LEN + count * 8;
    if bytes.len() < expected {
        return Err(format_err(
            bytes.len(),
            format!(
                "truncated payload: expected {expected} bytes for a {rows}x{cols} matrix"
            ),
        ));
    }
    if bytes.len() > expected {
        return Err(format_err(expected, "trailing bytes after payload".into()));
    }

    let mut data = Vec::with_capacity(count);
    for idx in 0..count {
        let offset = HEADER_LEN + idx * 8;
        let value = f64::from_le_bytes(bytes[offset..offset + 8].try_into().unwrap());
        if !value.is_finite() {
            return Err(format_err(
                offset,
                format!("non-finite entry {value} at index {idx}"),
            ));
        }
        data.push(value);
    }
    DenseMatrix::new(rows, cols, data)
}
