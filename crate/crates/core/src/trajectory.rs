//! Trajectories in video pixel coordinates and the pooling operations that
//! turn them into per-trajectory descriptors.
//!
//! A descriptor is the per-channel sum of map values sampled along a
//! trajectory. Pixel coordinates are mapped onto the coarser map grid by
//! scaling with `map_extent / video_extent`, rounding half up, and clamping
//! to the grid. Summation always runs over trajectory points in ascending
//! order, one channel at a time, so the two ways of computing the
//! cross-stream descriptor (pooling a premultiplied map, or weighting fibers
//! point by point) produce bit-identical results.

use crate::error::{CpdError, Result};
use crate::tensor::{CrossStreamMap, MapDims, NormMode, NormalizedMap, Stream, VideoDims, WeightMap};

/// One tracked point: pixel position and frame index, all 0-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TrajectoryPoint {
    pub x: u32,
    pub y: u32,
    pub t: u32,
}

/// A tracked point sequence over consecutive frames.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    id: usize,
    points: Vec<TrajectoryPoint>,
}

impl Trajectory {
    pub fn new(id: usize, points: Vec<TrajectoryPoint>) -> Result<Self> {
        if points.is_empty() {
            return Err(CpdError::EmptyInput {
                what: format!("trajectory {id} has no points"),
            });
        }
        for (i, pair) in points.windows(2).enumerate() {
            if pair[1].t != pair[0].t + 1 {
                return Err(CpdError::TrajectoryBounds {
                    trajectory: id,
                    point: i + 1,
                    reason: format!(
                        "frame index {} does not follow {} consecutively",
                        pair[1].t, pair[0].t
                    ),
                });
            }
        }
        Ok(Trajectory { id, points })
    }

    pub fn id(&self) -> usize {
        self.id
    }

    pub fn points(&self) -> &[TrajectoryPoint] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// All trajectories of one video, together with the pixel geometry and frame
/// count they were tracked in.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectorySet {
    video: VideoDims,
    frames: usize,
    trajectories: Vec<Trajectory>,
}

impl TrajectorySet {
    pub fn new(video: VideoDims, frames: usize, trajectories: Vec<Trajectory>) -> Result<Self> {
        if frames == 0 {
            return Err(CpdError::InvalidDims {
                reason: "trajectory set frame count must be positive".into(),
            });
        }
        for traj in &trajectories {
            for (i, p) in traj.points().iter().enumerate() {
                if p.x >= video.width || p.y >= video.height {
                    return Err(CpdError::TrajectoryBounds {
                        trajectory: traj.id(),
                        point: i,
                        reason: format!("pixel ({}, {}) outside video {video}", p.x, p.y),
                    });
                }
                if p.t as usize >= frames {
                    return Err(CpdError::TrajectoryBounds {
                        trajectory: traj.id(),
                        point: i,
                        reason: format!("frame {} outside 0..{frames}", p.t),
                    });
                }
            }
        }
        Ok(TrajectorySet {
            video,
            frames,
            trajectories,
        })
    }

    pub fn video(&self) -> VideoDims {
        self.video
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn trajectories(&self) -> &[Trajectory] {
        &self.trajectories
    }

    pub fn len(&self) -> usize {
        self.trajectories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trajectories.is_empty()
    }
}

/// Which pooled descriptor to compute from a normalized map.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DescriptorKind {
    /// Pool the normalized map as-is.
    Tdd,
    /// Pool the map weighted by the other stream.
    Cpd,
}

impl DescriptorKind {
    pub fn as_str(self) -> &'static str {
        match self {
            DescriptorKind::Tdd => "tdd",
            DescriptorKind::Cpd => "cpd",
        }
    }
}

impl std::fmt::Display for DescriptorKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for DescriptorKind {
    type Err = CpdError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tdd" => Ok(DescriptorKind::Tdd),
            "cpd" => Ok(DescriptorKind::Cpd),
            other => Err(CpdError::InvalidParam {
                reason: format!("unknown descriptor kind {other:?}, expected tdd or cpd"),
            }),
        }
    }
}

/// Per-channel sums along one trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct PooledDescriptor {
    pub trajectory_id: usize,
    pub values: Vec<f64>,
}

/// Ratio of map extent to video extent on each axis.
pub fn scale_ratios(dims: MapDims, video: VideoDims) -> (f64, f64) {
    (
        dims.width as f64 / video.width as f64,
        dims.height as f64 / video.height as f64,
    )
}

/// Round half up: 0.5 goes to 1, 1.5 to 2.
#[inline]
fn round_half_up(v: f64) -> i64 {
    (v + 0.5).floor() as i64
}

/// Map a pixel position onto the map grid: scale each axis, round half up,
/// and clamp into the grid bounds.
#[inline]
pub fn map_point(x: u32, y: u32, ratios: (f64, f64), grid: (usize, usize)) -> (usize, usize) {
    let i = round_half_up(ratios.0 * f64::from(x)).clamp(0, grid.0 as i64 - 1) as usize;
    let j = round_half_up(ratios.1 * f64::from(y)).clamp(0, grid.1 as i64 - 1) as usize;
    (i, j)
}

fn check_geometry(
    what: &str,
    map_video: VideoDims,
    map_frames: usize,
    set: &TrajectorySet,
) -> Result<()> {
    if map_video != set.video() {
        return Err(CpdError::ShapeMismatch {
            left: format!("{what} video {}", map_video),
            right: format!("trajectory video {}", set.video()),
        });
    }
    if map_frames != set.frames() {
        return Err(CpdError::ShapeMismatch {
            left: format!("{what} frames {map_frames}"),
            right: format!("trajectory frames {}", set.frames()),
        });
    }
    Ok(())
}

fn check_point_frame(traj: &Trajectory, point: usize, t: usize, frames: usize) -> Result<()> {
    if t >= frames {
        return Err(CpdError::TrajectoryBounds {
            trajectory: traj.id(),
            point,
            reason: format!("frame {t} outside map with {frames} frames"),
        });
    }
    Ok(())
}

/// Pool a normalized map along one trajectory: per channel, the sum of the
/// sampled values over points in ascending order.
pub fn pool_tdd(traj: &Trajectory, map: &NormalizedMap, set: &TrajectorySet) -> Result<PooledDescriptor> {
    check_geometry("map", map.video(), map.dims().frames, set)?;
    let d = map.dims();
    let ratios = scale_ratios(d, set.video());
    let mut values = vec![0.0f64; d.channels];
    for (pi, p) in traj.points().iter().enumerate() {
        let t = p.t as usize;
        check_point_frame(traj, pi, t, d.frames)?;
        let (i, j) = map_point(p.x, p.y, ratios, (d.width, d.height));
        let fiber = map.fiber(i, j, t);
        for (acc, &v) in values.iter_mut().zip(fiber) {
            *acc += v;
        }
    }
    Ok(PooledDescriptor {
        trajectory_id: traj.id(),
        values,
    })
}

/// Pool a premultiplied cross-stream map along one trajectory.
pub fn pool_cpd_direct(
    traj: &Trajectory,
    map: &CrossStreamMap,
    set: &TrajectorySet,
) -> Result<PooledDescriptor> {
    check_geometry("map", map.video(), map.dims().frames, set)?;
    let d = map.dims();
    let ratios = scale_ratios(d, set.video());
    let mut values = vec![0.0f64; d.channels];
    for (pi, p) in traj.points().iter().enumerate() {
        let t = p.t as usize;
        check_point_frame(traj, pi, t, d.frames)?;
        let (i, j) = map_point(p.x, p.y, ratios, (d.width, d.height));
        let fiber = map.fiber(i, j, t);
        for (acc, &v) in values.iter_mut().zip(fiber) {
            *acc += v;
        }
    }
    Ok(PooledDescriptor {
        trajectory_id: traj.id(),
        values,
    })
}

/// Pool a normalized map weighted point-by-point with the other stream's
/// weight, sampled at the same scaled-and-rounded cell. Multiplying each
/// fiber value by the weight before adding reproduces `pool_cpd_direct` of
/// the premultiplied map exactly, because both evaluate `fl(fl(c*w) + acc)`
/// in the same order.
pub fn pool_cpd_weighted(
    traj: &Trajectory,
    map: &NormalizedMap,
    weights: &WeightMap,
    set: &TrajectorySet,
) -> Result<PooledDescriptor> {
    pool_cpd_weighted_with(traj, map, weights, set, false)
}

/// Like `pool_cpd_weighted`, with same-stream weighting allowed for ablations.
pub fn pool_cpd_weighted_with(
    traj: &Trajectory,
    map: &NormalizedMap,
    weights: &WeightMap,
    set: &TrajectorySet,
    allow_same_stream: bool,
) -> Result<PooledDescriptor> {
    check_geometry("map", map.video(), map.dims().frames, set)?;
    let d = map.dims();
    if weights.width() != d.width || weights.height() != d.height || weights.frames() != d.frames {
        return Err(CpdError::ShapeMismatch {
            left: format!("map {d}"),
            right: format!(
                "weights {}x{}x{}",
                weights.width(),
                weights.height(),
                weights.frames()
            ),
        });
    }
    if map.video() != weights.video() {
        return Err(CpdError::ShapeMismatch {
            left: format!("map video {}", map.video()),
            right: format!("weight video {}", weights.video()),
        });
    }
    if !allow_same_stream && map.stream() == weights.stream() {
        return Err(CpdError::SameStreamPairing {
            stream: map.stream(),
        });
    }
    let ratios = scale_ratios(d, set.video());
    let mut values = vec![0.0f64; d.channels];
    for (pi, p) in traj.points().iter().enumerate() {
        let t = p.t as usize;
        check_point_frame(traj, pi, t, d.frames)?;
        let (i, j) = map_point(p.x, p.y, ratios, (d.width, d.height));
        let w = weights.value(i, j, t);
        let fiber = map.fiber(i, j, t);
        for (acc, &v) in values.iter_mut().zip(fiber) {
            *acc += v * w;
        }
    }
    Ok(PooledDescriptor {
        trajectory_id: traj.id(),
        values,
    })
}

/// All descriptors of one `(stream, mode, kind)` combination for a video.
#[derive(Debug, Clone, PartialEq)]
pub struct DescriptorSet {
    pub stream: Stream,
    pub mode: NormMode,
    pub kind: DescriptorKind,
    pub channels: usize,
    pub descriptors: Vec<PooledDescriptor>,
}

impl DescriptorSet {
    /// Descriptor values as a row-per-trajectory matrix.
    pub fn to_matrix(&self) -> crate::matrix::Matrix {
        let mut m = crate::matrix::Matrix::new(self.channels);
        for d in &self.descriptors {
            m.push_row(&d.values);
        }
        m
    }
}

/// Normalized maps for both streams of one layer, plus the weight maps needed
/// for cross-stream pooling.
#[derive(Debug, Clone)]
pub struct PreparedMaps {
    entries: Vec<(Stream, NormMode, NormalizedMap)>,
    weights: Vec<(Stream, WeightMap)>,
}

impl PreparedMaps {
    /// Normalize both streams under each requested mode. Weight maps are
    /// always built from the spatiotemporal normalization of each stream.
    pub fn build(
        spatial: &crate::tensor::FeatureMap,
        temporal: &crate::tensor::FeatureMap,
        modes: &[NormMode],
    ) -> Result<Self> {
        if spatial.stream() != Stream::Spatial || temporal.stream() != Stream::Temporal {
            return Err(CpdError::InvalidParam {
                reason: format!(
                    "expected a spatial and a temporal map, got {} and {}",
                    spatial.stream(),
                    temporal.stream()
                ),
            });
        }
        if spatial.dims() != temporal.dims() || spatial.video() != temporal.video() {
            return Err(CpdError::ShapeMismatch {
                left: format!("spatial {} video {}", spatial.dims(), spatial.video()),
                right: format!("temporal {} video {}", temporal.dims(), temporal.video()),
            });
        }
        if modes.is_empty() {
            return Err(CpdError::EmptyInput {
                what: "normalization mode list".into(),
            });
        }
        let mut entries = Vec::new();
        for &(stream, m) in &[(Stream::Spatial, spatial), (Stream::Temporal, temporal)] {
            for &mode in modes {
                entries.push((stream, mode, crate::tensor::normalize(m, mode)));
            }
        }
        let weights = [(Stream::Spatial, spatial), (Stream::Temporal, temporal)]
            .iter()
            .map(|&(stream, m)| {
                (
                    stream,
                    crate::tensor::weight_map(&crate::tensor::spatiotemporal_normalize(m)),
                )
            })
            .collect();
        Ok(PreparedMaps {
            entries,
            weights,
        })
    }

    pub fn normalized(&self, stream: Stream, mode: NormMode) -> Option<&NormalizedMap> {
        self.entries
            .iter()
            .find(|(s, m, _)| *s == stream && *m == mode)
            .map(|(_, _, n)| n)
    }

    pub fn weights(&self, stream: Stream) -> Option<&WeightMap> {
        self.weights
            .iter()
            .find(|(s, _)| *s == stream)
            .map(|(_, w)| w)
    }
}

/// Pool every trajectory for every `(stream, mode, kind)` combination.
/// Cross-stream descriptors weight each map with the other stream's weights.
pub fn pool_all(
    set: &TrajectorySet,
    maps: &PreparedMaps,
    modes: &[NormMode],
    kinds: &[DescriptorKind],
) -> Result<Vec<DescriptorSet>> {
    if kinds.is_empty() {
        return Err(CpdError::EmptyInput {
            what: "descriptor kind list".into(),
        });
    }
    let mut out = Vec::new();
    for &stream in &[Stream::Spatial, Stream::Temporal] {
        for &mode in modes {
            let map = maps.normalized(stream, mode).ok_or(CpdError::InvalidParam {
                reason: format!("no normalized map prepared for {stream}/{mode}"),
            })?;
            for &kind in kinds {
                let mut descriptors = Vec::with_capacity(set.len());
                match kind {
                    DescriptorKind::Tdd => {
                        for traj in set.trajectories() {
                            descriptors.push(pool_tdd(traj, map, set)?);
                        }
                    }
                    DescriptorKind::Cpd => {
                        let w = maps.weights(stream.other()).ok_or(CpdError::InvalidParam {
                            reason: format!("no weight map prepared for {}", stream.other()),
                        })?;
                        for traj in set.trajectories() {
                            descriptors.push(pool_cpd_weighted(traj, map, w, set)?);
                        }
                    }
                }
                out.push(DescriptorSet {
                    stream,
                    mode,
                    kind,
                    channels: map.dims().channels,
                    descriptors,
                });
            }
        }
    }
    Ok(out)
}
