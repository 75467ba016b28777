//! On-disk formats: binary tensors and matrices, text trajectories and score
//! tables, codebook containers, and PGM weight-map frames. All multi-byte
//! fields are little-endian. Writers go through a temporary file and rename,
//! so a crash never leaves a half-written artifact behind.

pub mod codebook;
pub mod matrix_file;
pub mod pgm;
pub mod scores_file;
pub mod tensor_file;
pub mod trajectory_file;

use std::fs;
use std::io::Read;
use std::path::Path;

use crate::error::{CpdError, Result};

pub(crate) fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = std::path::PathBuf::from(tmp);
    fs::write(&tmp, bytes).map_err(|e| CpdError::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| CpdError::io(path, e))?;
    Ok(())
}

pub(crate) fn read_all(path: &Path) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut buf))
        .map_err(|e| CpdError::io(path, e))?;
    Ok(buf)
}

/// Cursor over a byte buffer with typed little-endian reads that report
/// truncation against the source path.
pub(crate) struct ByteReader<'a> {
    path: &'a Path,
    buf: &'a [u8],
    pos: usize,
}

impl<'a> ByteReader<'a> {
    pub fn new(path: &'a Path, buf: &'a [u8]) -> Self {
        ByteReader { path, buf, pos: 0 }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.buf.len() {
            return Err(CpdError::Truncated {
                path: self.path.to_path_buf(),
                expected: (self.pos + n) as u64,
                actual: self.buf.len() as u64,
            });
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    pub fn magic(&mut self, expected: &'static str) -> Result<()> {
        let got = self.take(expected.len())?;
        if got != expected.as_bytes() {
            return Err(CpdError::BadMagic {
                path: self.path.to_path_buf(),
                expected,
            });
        }
        Ok(())
    }

    pub fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    pub fn u16(&mut self) -> Result<u16> {
        let b = self.take(2)?;
        Ok(u16::from_le_bytes([b[0], b[1]]))
    }

    pub fn u32(&mut self) -> Result<u32> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    pub fn f64(&mut self) -> Result<f64> {
        let b = self.take(8)?;
        Ok(f64::from_le_bytes(b.try_into().unwrap()))
    }

    /// Remaining bytes, which must number exactly `expected`.
    pub fn payload(&mut self, expected: usize) -> Result<&'a [u8]> {
        let actual = self.buf.len() - self.pos;
        if actual != expected {
            return Err(CpdError::Truncated {
                path: self.path.to_path_buf(),
                expected: expected as u64,
                actual: actual as u64,
            });
        }
        self.take(expected)
    }
}
