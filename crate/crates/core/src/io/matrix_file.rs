//! Binary matrix container (`CPDD`) for descriptor sets and representations:
//! magic, version u16, row and column counts as u32, then f64 values in
//! row-major order.

use std::path::Path;

use crate::error::{CpdError, Result};
use crate::io::{read_all, write_atomic, ByteReader};
use crate::matrix::Matrix;

pub const MAGIC: &str = "CPDD";
pub const VERSION: u16 = 1;

pub fn save_matrix(path: &Path, m: &Matrix) -> Result<()> {
    let mut out = Vec::with_capacity(14 + m.data().len() * 8);
    out.extend_from_slice(MAGIC.as_bytes());
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(m.rows() as u32).to_le_bytes());
    out.extend_from_slice(&(m.cols() as u32).to_le_bytes());
    for &v in m.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    write_atomic(path, &out)
}

pub fn load_matrix(path: &Path) -> Result<Matrix> {
    let bytes = read_all(path)?;
    let mut r = ByteReader::new(path, &bytes);
    r.magic(MAGIC)?;
    let version = r.u16()?;
    if version != VERSION {
        return Err(CpdError::UnsupportedVersion {
            path: path.to_path_buf(),
            version,
        });
    }
    let rows = r.u32()? as usize;
    let cols = r.u32()? as usize;
    if cols == 0 {
        return Err(CpdError::InvalidDims {
            reason: format!("{}: matrix must have at least one column", path.display()),
        });
    }
    let count = rows.checked_mul(cols).ok_or(CpdError::DimOverflow {
        what: format!("{rows}x{cols} matrix"),
    })?;
    let payload_len = count.checked_mul(8).ok_or(CpdError::DimOverflow {
        what: format!("payload of {rows}x{cols} matrix"),
    })?;
    let payload = r.payload(payload_len)?;
    let mut data = Vec::with_capacity(count);
    for (i, chunk) in payload.chunks_exact(8).enumerate() {
        let v = f64::from_le_bytes(chunk.try_into().unwrap());
        if !v.is_finite() {
            return Err(CpdError::NonFinite { index: i });
        }
        data.push(v);
    }
    Matrix::from_flat(rows, cols, data)
}
