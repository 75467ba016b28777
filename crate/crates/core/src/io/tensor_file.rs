//! Binary 4-D tensor container (`CPDT`).
//!
//! Layout: magic `CPDT`, version u16, the four map dimensions (X, Y, N, T)
//! as u32, a stream tag byte (0 spatial, 1 temporal), the source video's
//! pixel width and height as u32, then X*Y*N*T payload values as f32 in the
//! in-memory order (frame-major, contiguous channel fibers). Values are
//! stored single precision and widened back to f64 on load.

use std::path::Path;

use crate::error::{CpdError, Result};
use crate::io::{read_all, write_atomic, ByteReader};
use crate::tensor::{FeatureMap, MapDims, Stream, VideoDims, WeightMap};

pub const MAGIC: &str = "CPDT";
pub const VERSION: u16 = 1;

fn stream_tag(s: Stream) -> u8 {
    match s {
        Stream::Spatial => 0,
        Stream::Temporal => 1,
    }
}

fn encode(dims: MapDims, video: VideoDims, stream: Stream, values: &[f64]) -> Vec<u8> {
    let mut out = Vec::with_capacity(31 + values.len() * 4);
    out.extend_from_slice(MAGIC.as_bytes());
    out.extend_from_slice(&VERSION.to_le_bytes());
    for d in [dims.width, dims.height, dims.channels, dims.frames] {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
    out.push(stream_tag(stream));
    out.extend_from_slice(&video.width.to_le_bytes());
    out.extend_from_slice(&video.height.to_le_bytes());
    for &v in values {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
    out
}

/// Write any tensor-shaped value set. Values are narrowed to f32.
pub fn write_tensor(
    path: &Path,
    dims: MapDims,
    video: VideoDims,
    stream: Stream,
    values: &[f64],
) -> Result<()> {
    if values.len() != dims.value_count() {
        return Err(CpdError::ShapeMismatch {
            left: format!("map {dims}"),
            right: format!("{} values", values.len()),
        });
    }
    write_atomic(path, &encode(dims, video, stream, values))
}

pub fn save_feature_map(path: &Path, map: &FeatureMap) -> Result<()> {
    write_tensor(path, map.dims(), map.video(), map.stream(), map.data())
}

/// Weight maps are stored as single-channel tensors.
pub fn save_weight_map(path: &Path, map: &WeightMap) -> Result<()> {
    let dims = MapDims::new(map.width(), map.height(), 1, map.frames())?;
    write_tensor(path, dims, map.video(), map.stream(), map.data())
}

struct RawTensor {
    dims: MapDims,
    video: VideoDims,
    stream: Stream,
    values: Vec<f64>,
}

fn load_raw(path: &Path) -> Result<RawTensor> {
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
    let width = r.u32()? as usize;
    let height = r.u32()? as usize;
    let channels = r.u32()? as usize;
    let frames = r.u32()? as usize;
    let stream = match r.u8()? {
        0 => Stream::Spatial,
        1 => Stream::Temporal,
        tag => {
            return Err(CpdError::InvalidStreamTag {
                path: path.to_path_buf(),
                tag,
            })
        }
    };
    let video = VideoDims::new(r.u32()?, r.u32()?)?;
    let dims = MapDims::new(width, height, channels, frames)?;
    let count = dims.checked_len().ok_or(CpdError::DimOverflow {
        what: format!("map {dims}"),
    })?;
    let payload_len = count.checked_mul(4).ok_or(CpdError::DimOverflow {
        what: format!("payload of map {dims}"),
    })?;
    let payload = r.payload(payload_len)?;
    let mut values = Vec::with_capacity(count);
    for chunk in payload.chunks_exact(4) {
        values.push(f64::from(f32::from_le_bytes(chunk.try_into().unwrap())));
    }
    Ok(RawTensor {
        dims,
        video,
        stream,
        values,
    })
}

/// Load a tensor as a validated feature map (finite, non-negative values).
pub fn load_feature_map(path: &Path) -> Result<FeatureMap> {
    let raw = load_raw(path)?;
    FeatureMap::new(raw.dims, raw.video, raw.stream, raw.values)
}

/// Load a single-channel tensor as a weight map.
pub fn load_weight_map(path: &Path) -> Result<WeightMap> {
    let raw = load_raw(path)?;
    if raw.dims.channels != 1 {
        return Err(CpdError::InvalidDims {
            reason: format!(
                "weight map must have one channel, {} has {}",
                path.display(),
                raw.dims.channels
            ),
        });
    }
    WeightMap::from_parts(
        raw.dims.width,
        raw.dims.height,
        raw.dims.frames,
        raw.video,
        raw.stream,
        raw.values,
    )
}
