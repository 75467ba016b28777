//! Weight-map frame export as binary PGM (P5) for visual inspection.

use std::path::Path;

use crate::error::{CpdError, Result};
use crate::io::write_atomic;
use crate::tensor::WeightMap;

/// Min-max scale a frame into 0..=255 with round-half-up. A constant frame
/// has no contrast and maps to all zeros.
pub fn scale_frame(values: &[f64]) -> Vec<u8> {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for &v in values {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    if hi <= lo {
        return vec![0u8; values.len()];
    }
    let span = hi - lo;
    values
        .iter()
        .map(|&v| ((v - lo) / span * 255.0 + 0.5).floor() as u8)
        .collect()
}

/// Export frame `t` of a weight map as an 8-bit PGM image.
pub fn export_weight_frame(path: &Path, map: &WeightMap, t: usize) -> Result<()> {
    if t >= map.frames() {
        return Err(CpdError::InvalidParam {
            reason: format!("frame {t} outside weight map with {} frames", map.frames()),
        });
    }
    let pixels = scale_frame(map.frame(t));
    let mut out = format!("P5\n{} {}\n255\n", map.width(), map.height()).into_bytes();
    out.extend_from_slice(&pixels);
    write_atomic(path, &out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scaling_spreads_the_range_with_half_up_rounding() {
        // (v - 0) / 4 * 255 for v in 0,1,2,4 -> 0, 63.75, 127.5, 255.
        assert_eq!(scale_frame(&[0.0, 1.0, 2.0, 4.0]), vec![0, 64, 128, 255]);
    }

    #[test]
    fn constant_frames_have_no_contrast() {
        assert_eq!(scale_frame(&[3.0, 3.0, 3.0]), vec![0, 0, 0]);
    }
}
