//! Little-endian `f64` payloads with a CRC32 trailer.

use std::fs;
use std::path::Path;

use crate::error::{AppError, Result};

pub fn encode(values: &[f64]) -> Vec<u8> {
    let mut out = Vec::with_capacity(values.len() * 8 + 4);
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
    let crc = crc32fast::hash(&out);
    out.extend_from_slice(&crc.to_le_bytes());
    out
}

/// Checks the trailer first so truncation surfaces as a checksum error.
pub fn decode(path: &Path, bytes: &[u8]) -> Result<Vec<f64>> {
    if bytes.len() < 4 {
        return Err(AppError::Checksum(path.to_path_buf()));
    }
    let (payload, trailer) = bytes.split_at(bytes.len() - 4);
    let want = u32::from_le_bytes(trailer.try_into().expect("4 bytes"));
    if crc32fast::hash(payload) != want {
        return Err(AppError::Checksum(path.to_path_buf()));
    }
    if payload.len() % 8 != 0 {
        return Err(AppError::format(path, "payload is not a whole number of f64 values"));
    }
    Ok(payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect())
}

pub fn write(path: &Path, values: &[f64]) -> Result<()> {
    fs::write(path, encode(values)).map_err(AppError::io(path))
}

pub fn read(path: &Path) -> Result<Vec<f64>> {
    let bytes = fs::read(path).map_err(AppError::io(path))?;
    decode(path, &bytes)
}

pub fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(AppError::json(path))?;
    text.push('\n');
    fs::write(path, text).map_err(AppError::io(path))
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(AppError::io(path))?;
    serde_json::from_str(&text).map_err(AppError::json(path))
}

pub fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(AppError::io(path))
}
