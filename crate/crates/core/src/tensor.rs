//! 4-D convolutional feature maps and the map-level operations that prepare
//! them for trajectory pooling: per-channel and per-position normalization,
//! aggregated weight maps, and the cross-stream product.
//!
//! Values are stored in a flat `Vec<f64>` with frame-major layout: flat index
//! `((t * Y + y) * X + x) * N + n`, so a channel fiber at a fixed position is
//! contiguous. All maps are non-negative because they come from rectified
//! activations; constructors enforce this.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{CpdError, Result};

/// Spatial extent, channel count, and frame count of a feature map.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MapDims {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub frames: usize,
}

impl MapDims {
    pub fn new(width: usize, height: usize, channels: usize, frames: usize) -> Result<Self> {
        let d = MapDims {
            width,
            height,
            channels,
            frames,
        };
        if width == 0 || height == 0 || channels == 0 || frames == 0 {
            return Err(CpdError::InvalidDims {
                reason: format!("all map dimensions must be positive, got {d}"),
            });
        }
        d.checked_len().ok_or(CpdError::DimOverflow {
            what: format!("map {d}"),
        })?;
        Ok(d)
    }

    /// Total number of stored values, or `None` when the product overflows.
    pub fn checked_len(&self) -> Option<usize> {
        self.width
            .checked_mul(self.height)?
            .checked_mul(self.channels)?
            .checked_mul(self.frames)
    }

    pub fn value_count(&self) -> usize {
        self.width * self.height * self.channels * self.frames
    }

    /// Flat index of `(x, y, n, t)`.
    #[inline]
    pub fn index(&self, x: usize, y: usize, n: usize, t: usize) -> usize {
        ((t * self.height + y) * self.width + x) * self.channels + n
    }
}

impl fmt::Display for MapDims {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}x{}x{}x{}",
            self.width, self.height, self.channels, self.frames
        )
    }
}

/// Pixel size of the source video the trajectories were tracked in.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VideoDims {
    pub width: u32,
    pub height: u32,
}

impl VideoDims {
    pub fn new(width: u32, height: u32) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(CpdError::InvalidDims {
                reason: format!("video dimensions must be positive, got {width}x{height}"),
            });
        }
        Ok(VideoDims { width, height })
    }
}

impl fmt::Display for VideoDims {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}", self.width, self.height)
    }
}

/// Which two-stream network a map came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stream {
    Spatial,
    Temporal,
}

impl Stream {
    /// The complementary stream, used to pick the weighting side of a pair.
    pub fn other(self) -> Stream {
        match self {
            Stream::Spatial => Stream::Temporal,
            Stream::Temporal => Stream::Spatial,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Stream::Spatial => "spatial",
            Stream::Temporal => "temporal",
        }
    }
}

impl fmt::Display for Stream {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Stream {
    type Err = CpdError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "spatial" => Ok(Stream::Spatial),
            "temporal" => Ok(Stream::Temporal),
            other => Err(CpdError::InvalidParam {
                reason: format!("unknown stream {other:?}, expected spatial or temporal"),
            }),
        }
    }
}

/// Normalization scheme applied to a feature map before pooling.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum NormMode {
    /// Each channel is divided by its own maximum over all positions and frames.
    #[serde(rename = "st")]
    Spatiotemporal,
    /// Each position's channel fiber is divided by its own maximum.
    #[serde(rename = "ch")]
    Channel,
}

impl NormMode {
    pub fn as_str(self) -> &'static str {
        match self {
            NormMode::Spatiotemporal => "st",
            NormMode::Channel => "ch",
        }
    }
}

impl fmt::Display for NormMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for NormMode {
    type Err = CpdError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "st" => Ok(NormMode::Spatiotemporal),
            "ch" => Ok(NormMode::Channel),
            other => Err(CpdError::InvalidParam {
                reason: format!("unknown normalization mode {other:?}, expected st or ch"),
            }),
        }
    }
}

fn validate_values(data: &[f64]) -> Result<()> {
    for (i, &v) in data.iter().enumerate() {
        if !v.is_finite() {
            return Err(CpdError::NonFinite { index: i });
        }
        if v < 0.0 {
            return Err(CpdError::NegativeValue { index: i, value: v });
        }
    }
    Ok(())
}

fn validate_shape(dims: MapDims, video: VideoDims, len: usize) -> Result<()> {
    if len != dims.value_count() {
        return Err(CpdError::ShapeMismatch {
            left: format!("map {dims} ({} values)", dims.value_count()),
            right: format!("{len} values"),
        });
    }
    if (video.width as usize) < dims.width || (video.height as usize) < dims.height {
        return Err(CpdError::InvalidDims {
            reason: format!("video {video} smaller than map grid {dims}"),
        });
    }
    Ok(())
}

/// Raw rectified feature map for one stream of one video.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    dims: MapDims,
    video: VideoDims,
    stream: Stream,
    data: Vec<f64>,
}

impl FeatureMap {
    pub fn new(dims: MapDims, video: VideoDims, stream: Stream, data: Vec<f64>) -> Result<Self> {
        validate_shape(dims, video, data.len())?;
        validate_values(&data)?;
        Ok(FeatureMap {
            dims,
            video,
            stream,
            data,
        })
    }

    pub fn dims(&self) -> MapDims {
        self.dims
    }

    pub fn video(&self) -> VideoDims {
        self.video
    }

    pub fn stream(&self) -> Stream {
        self.stream
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn value(&self, x: usize, y: usize, n: usize, t: usize) -> f64 {
        self.data[self.dims.index(x, y, n, t)]
    }

    pub fn into_parts(self) -> (MapDims, VideoDims, Stream, Vec<f64>) {
        (self.dims, self.video, self.stream, self.data)
    }
}

/// Feature map scaled into `[0, 1]` by one of the two normalization modes.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedMap {
    dims: MapDims,
    video: VideoDims,
    stream: Stream,
    mode: NormMode,
    data: Vec<f64>,
}

impl NormalizedMap {
    /// Rebuild from stored values, checking shape and the `[0, 1]` range.
    pub fn from_parts(
        dims: MapDims,
        video: VideoDims,
        stream: Stream,
        mode: NormMode,
        data: Vec<f64>,
    ) -> Result<Self> {
        validate_shape(dims, video, data.len())?;
        validate_values(&data)?;
        for (i, &v) in data.iter().enumerate() {
            if v > 1.0 {
                return Err(CpdError::InvalidParam {
                    reason: format!("normalized value {v} at flat index {i} exceeds 1"),
                });
            }
        }
        Ok(NormalizedMap {
            dims,
            video,
            stream,
            mode,
            data,
        })
    }

    pub fn dims(&self) -> MapDims {
        self.dims
    }

    pub fn video(&self) -> VideoDims {
        self.video
    }

    pub fn stream(&self) -> Stream {
        self.stream
    }

    pub fn mode(&self) -> NormMode {
        self.mode
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn value(&self, x: usize, y: usize, n: usize, t: usize) -> f64 {
        self.data[self.dims.index(x, y, n, t)]
    }

    /// Contiguous channel fiber at `(x, y, t)`.
    #[inline]
    pub fn fiber(&self, x: usize, y: usize, t: usize) -> &[f64] {
        let base = self.dims.index(x, y, 0, t);
        &self.data[base..base + self.dims.channels]
    }
}

/// Per-position aggregate of a normalized map: the channel sum at each
/// `(x, y, t)`, used to weight the other stream.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightMap {
    width: usize,
    height: usize,
    frames: usize,
    video: VideoDims,
    /// Stream of the normalized map the weights were summed from.
    stream: Stream,
    data: Vec<f64>,
}

impl WeightMap {
    pub fn from_parts(
        width: usize,
        height: usize,
        frames: usize,
        video: VideoDims,
        stream: Stream,
        data: Vec<f64>,
    ) -> Result<Self> {
        // Reuse the 4-D checks with a single-channel shape.
        let dims = MapDims::new(width, height, 1, frames)?;
        validate_shape(dims, video, data.len())?;
        validate_values(&data)?;
        Ok(WeightMap {
            width,
            height,
            frames,
            video,
            stream,
            data,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn video(&self) -> VideoDims {
        self.video
    }

    pub fn stream(&self) -> Stream {
        self.stream
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn value(&self, x: usize, y: usize, t: usize) -> f64 {
        self.data[(t * self.height + y) * self.width + x]
    }

    /// One frame of weights, row-major.
    pub fn frame(&self, t: usize) -> &[f64] {
        let len = self.width * self.height;
        &self.data[t * len..(t + 1) * len]
    }
}

/// Product of one stream's normalized map with the other stream's weight map.
/// Values lie in `[0, N]` where `N` is the weighting map's channel count.
#[derive(Debug, Clone, PartialEq)]
pub struct CrossStreamMap {
    dims: MapDims,
    video: VideoDims,
    /// Stream of the map that carried the channels (the weighted side).
    stream: Stream,
    mode: NormMode,
    data: Vec<f64>,
}

impl CrossStreamMap {
    /// Rebuild from stored values. Values must be finite, non-negative, and
    /// no larger than the channel count, the ceiling a product of a unit map
    /// and a channel-sum weight can reach.
    pub fn from_parts(
        dims: MapDims,
        video: VideoDims,
        stream: Stream,
        mode: NormMode,
        data: Vec<f64>,
    ) -> Result<Self> {
        validate_shape(dims, video, data.len())?;
        validate_values(&data)?;
        let ceiling = dims.channels as f64;
        for (i, &v) in data.iter().enumerate() {
            if v > ceiling {
                return Err(CpdError::InvalidParam {
                    reason: format!(
                        "cross-stream value {v} at flat index {i} exceeds the channel count {ceiling}"
                    ),
                });
            }
        }
        Ok(CrossStreamMap {
            dims,
            video,
            stream,
            mode,
            data,
        })
    }

    pub fn dims(&self) -> MapDims {
        self.dims
    }

    pub fn video(&self) -> VideoDims {
        self.video
    }

    pub fn stream(&self) -> Stream {
        self.stream
    }

    pub fn mode(&self) -> NormMode {
        self.mode
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn value(&self, x: usize, y: usize, n: usize, t: usize) -> f64 {
        self.data[self.dims.index(x, y, n, t)]
    }

    /// Contiguous channel fiber at `(x, y, t)`.
    #[inline]
    pub fn fiber(&self, x: usize, y: usize, t: usize) -> &[f64] {
        let base = self.dims.index(x, y, 0, t);
        &self.data[base..base + self.dims.channels]
    }
}

/// Scale each channel by its maximum over every position and frame. A channel
/// that is zero everywhere stays zero.
pub fn spatiotemporal_normalize(map: &FeatureMap) -> NormalizedMap {
    let dims = map.dims;
    let n = dims.channels;
    let mut maxes = vec![0.0f64; n];
    for fiber in map.data.chunks_exact(n) {
        for (m, &v) in maxes.iter_mut().zip(fiber) {
            if v > *m {
                *m = v;
            }
        }
    }
    let mut out = Vec::with_capacity(map.data.len());
    for fiber in map.data.chunks_exact(n) {
        for (&m, &v) in maxes.iter().zip(fiber) {
            out.push(if m == 0.0 { 0.0 } else { v / m });
        }
    }
    NormalizedMap {
        dims,
        video: map.video,
        stream: map.stream,
        mode: NormMode::Spatiotemporal,
        data: out,
    }
}

/// Scale each position's channel fiber by its own maximum. A fiber that is
/// zero everywhere stays zero.
pub fn channel_normalize(map: &FeatureMap) -> NormalizedMap {
    let n = map.dims.channels;
    let mut out = Vec::with_capacity(map.data.len());
    for fiber in map.data.chunks_exact(n) {
        let m = fiber.iter().fold(0.0f64, |acc, &v| if v > acc { v } else { acc });
        for &v in fiber {
            out.push(if m == 0.0 { 0.0 } else { v / m });
        }
    }
    NormalizedMap {
        dims: map.dims,
        video: map.video,
        stream: map.stream,
        mode: NormMode::Channel,
        data: out,
    }
}

/// Dispatch to the normalization matching `mode`.
pub fn normalize(map: &FeatureMap, mode: NormMode) -> NormalizedMap {
    match mode {
        NormMode::Spatiotemporal => spatiotemporal_normalize(map),
        NormMode::Channel => channel_normalize(map),
    }
}

/// Sum the channel fiber at every position, in ascending channel order, to
/// produce the per-position weight used on the other stream.
pub fn weight_map(map: &NormalizedMap) -> WeightMap {
    let n = map.dims.channels;
    let mut out = Vec::with_capacity(map.data.len() / n);
    for fiber in map.data.chunks_exact(n) {
        let mut s = 0.0f64;
        for &v in fiber {
            s += v;
        }
        out.push(s);
    }
    WeightMap {
        width: map.dims.width,
        height: map.dims.height,
        frames: map.dims.frames,
        video: map.video,
        stream: map.stream,
        data: out,
    }
}

/// Multiply every channel of `map` by the co-located weight from the other
/// stream. The two inputs must cover the same grid and come from different
/// streams; `weights.stream` names the stream the weights were derived from.
pub fn cross_stream(map: &NormalizedMap, weights: &WeightMap) -> Result<CrossStreamMap> {
    cross_stream_with(map, weights, false)
}

/// Like `cross_stream`, but `allow_same_stream` permits weighting a map with
/// its own stream's weights for ablation runs.
pub fn cross_stream_with(
    map: &NormalizedMap,
    weights: &WeightMap,
    allow_same_stream: bool,
) -> Result<CrossStreamMap> {
    let d = map.dims;
    if weights.width != d.width || weights.height != d.height || weights.frames != d.frames {
        return Err(CpdError::ShapeMismatch {
            left: format!("map {d}"),
            right: format!(
                "weights {}x{}x{}",
                weights.width, weights.height, weights.frames
            ),
        });
    }
    if map.video != weights.video {
        return Err(CpdError::ShapeMismatch {
            left: format!("map video {}", map.video),
            right: format!("weight video {}", weights.video),
        });
    }
    if !allow_same_stream && map.stream == weights.stream {
        return Err(CpdError::SameStreamPairing { stream: map.stream });
    }
    let n = d.channels;
    let mut out = Vec::with_capacity(map.data.len());
    for (fiber, &w) in map.data.chunks_exact(n).zip(&weights.data) {
        for &v in fiber {
            out.push(v * w);
        }
    }
    Ok(CrossStreamMap {
        dims: d,
        video: map.video,
        stream: map.stream,
        mode: map.mode,
        data: out,
    })
}
