//! `EMB1` binary matrices: 4 magic bytes, row and column counts as u64
//! little-endian, then `rows * cols` f32 little-endian values in row-major order.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::matrix::EmbeddingMatrix;

const MAGIC: &[u8; 4] = b"EMB1";
const HEADER_LEN: usize = 4 + 8 + 8;

pub fn write_embeddings<W: Write>(m: &EmbeddingMatrix, mut w: W) -> Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&(m.rows() as u64).to_le_bytes())?;
    w.write_all(&(m.cols() as u64).to_le_bytes())?;
    for &v in m.as_slice() {
        let narrowed = v as f32;
        if !narrowed.is_finite() {
            return Err(Error::Format(format!("value {v} does not fit in f32")));
        }
        w.write_all(&narrowed.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_embeddings<R: Read>(mut r: R) -> Result<EmbeddingMatrix> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    if bytes.len() < HEADER_LEN {
        return Err(Error::Format(format!(
            "file too short for header ({} bytes)",
            bytes.len()
        )));
    }
    if &bytes[..4] != MAGIC {
        return Err(Error::Format("bad magic, expected EMB1".into()));
    }
    let rows = u64::from_le_bytes(bytes[4..12].try_into().unwrap());
    let cols = u64::from_le_bytes(bytes[12..20].try_into().unwrap());
    let payload = &bytes[HEADER_LEN..];
    let expected = rows
        .checked_mul(cols)
        .and_then(|n| n.checked_mul(4))
        .ok_or_else(|| Error::Format(format!("header {rows}x{cols} overflows")))?;
    if payload.len() as u64 != expected {
        return Err(Error::Format(format!(
            "payload has {} bytes, header {rows}x{cols} needs {expected}",
            payload.len()
        )));
    }
    let data: Vec<f64> = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
        .collect();
    if data.iter().any(|v| !v.is_finite()) {
        return Err(Error::Format("non-finite value in payload".into()));
    }
    EmbeddingMatrix::new(rows as usize, cols as usize, data)
}

pub fn save_embeddings(m: &EmbeddingMatrix, path: impl AsRef<Path>) -> Result<()> {
    let file = File::create(path.as_ref())?;
    write_embeddings(m, BufWriter::new(file))
}

pub fn load_embeddings(path: impl AsRef<Path>) -> Result<EmbeddingMatrix> {
    let file = File::open(path.as_ref())?;
    read_embeddings(BufReader::new(file))
}

/// One line per row, comma-separated decimals.
pub fn write_csv<W: Write>(m: &EmbeddingMatrix, mut w: W) -> Result<()> {
    for row in m.row_iter() {
        let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        writeln!(w, "{}", line.join(","))?;
    }
    w.flush()?;
    Ok(())
}
