use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

pub fn write_f32_le(path: &Path, values: impl IntoIterator<Item = f64>) -> Result<()> {
    let bytes: Vec<u8> = values
        .into_iter()
        .flat_map(|v| (v as f32).to_le_bytes())
        .collect();
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn write_i32_le(path: &Path, values: &[i32]) -> Result<()> {
    let bytes: Vec<u8> = values.iter().flat_map(|v| v.to_le_bytes()).collect();
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn read_words(path: &Path, expected: usize) -> Result<Vec<[u8; 4]>> {
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let want = expected
        .checked_mul(4)
        .ok_or_else(|| Error::SizeMismatch(format!("{expected} words overflow")))?;
    if bytes.len() != want {
        return Err(Error::SizeMismatch(format!(
            "{}: expected {want} bytes, found {}",
            path.display(),
            bytes.len()
        )));
    }
    Ok(bytes
        .chunks_exact(4)
        .map(|c| [c[0], c[1], c[2], c[3]])
        .collect())
}

/// Reads exactly `expected` little-endian f32 values, widened to f64.
pub fn read_f32_le(path: &Path, expected: usize) -> Result<Vec<f64>> {
    Ok(read_words(path, expected)?
        .into_iter()
        .map(|w| f64::from(f32::from_le_bytes(w)))
        .collect())
}

pub fn read_i32_le(path: &Path, expected: usize) -> Result<Vec<i32>> {
    Ok(read_words(path, expected)?
        .into_iter()
        .map(i32::from_le_bytes)
        .collect())
}
