use std::io::{Read, Write};
use std::path::Path;

use nalgebra::DMatrix;

use super::activations::{read_exact, read_u64, to_usize};
use crate::error::{Error, Result};

pub const MATRIX_MAGIC: &[u8; 7] = b"SAEMAT1";

/// Reads a row-major f32 matrix file into an f64 matrix.
pub fn read_matrix(mut reader: impl Read) -> Result<DMatrix<f64>> {
    let mut magic = [0u8; 7];
    read_exact(&mut reader, &mut magic, "magic")?;
    if &magic != MATRIX_MAGIC {
        return Err(Error::Format("bad matrix magic".into()));
    }
    let rows = to_usize(read_u64(&mut reader, "rows")?)?;
    let cols = to_usize(read_u64(&mut reader, "cols")?)?;
    let len = rows
        .checked_mul(cols)
        .ok_or_else(|| Error::Format(format!("matrix shape {rows}x{cols} overflows")))?;
    let mut payload = vec![
        0u8;
        len.checked_mul(4)
            .ok_or_else(|| Error::Format("payload overflows".into()))?
    ];
    read_exact(&mut reader, &mut payload, "matrix payload")?;
    let mut trailing = [0u8; 1];
    if reader
        .read(&mut trailing)
        .map_err(|e| Error::Format(e.to_string()))?
        != 0
    {
        return Err(Error::Format("trailing bytes after matrix payload".into()));
    }
    let values: Vec<f64> = payload
        .chunks_exact(4)
        .map(|c| f64::from(f32::from_le_bytes(c.try_into().unwrap())))
        .collect();
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Value("matrix contains non-finite entries".into()));
    }
    Ok(DMatrix::from_row_slice(rows, cols, &values))
}

/// Writes `m` as row-major f32. Values are narrowed to f32.
pub fn write_matrix(m: &DMatrix<f64>, mut writer: impl Write) -> std::io::Result<()> {
    writer.write_all(MATRIX_MAGIC)?;
    writer.write_all(&(m.nrows() as u64).to_le_bytes())?;
    writer.write_all(&(m.ncols() as u64).to_le_bytes())?;
    let mut buf = Vec::with_capacity(m.len() * 4);
    for r in 0..m.nrows() {
        for c in 0..m.ncols() {
            buf.extend_from_slice(&(m[(r, c)] as f32).to_le_bytes());
        }
    }
    writer.write_all(&buf)
}

pub fn load_matrix(path: impl AsRef<Path>) -> Result<DMatrix<f64>> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_matrix(std::io::BufReader::new(file))
}

pub fn save_matrix(m: &DMatrix<f64>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut bytes = Vec::new();
    write_matrix(m, &mut bytes).expect("writing to a Vec cannot fail");
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}
