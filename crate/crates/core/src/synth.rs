//! Synthetic two-stream corpus generator.
//!
//! Each video gets a motion hotspot: a small cell region where all channels
//! fire intermittently in both streams. The class only modulates the firing
//! density: channels in the class's group fire more often than the rest.
//! Density survives both normalization modes (which rescale amplitudes), so
//! descriptors pooled over the hotspot shift along the class's channel group
//! while staying inside one shared distribution. On top of that, every
//! stream receives its own class-independent distractor blobs (strong
//! activations at positions where the other stream is quiet), plus a sparse
//! low-level sprinkle. Cross-stream weighting gates out the single-stream
//! structure; per-stream descriptors keep it as noise. One third of the
//! trajectories track the hotspot, the rest walk the background.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{CpdError, Result};
use crate::io::{tensor_file, trajectory_file, write_atomic};
use crate::seed::derive_seed;
use crate::tensor::{FeatureMap, MapDims, Stream, VideoDims};
use crate::trajectory::{Trajectory, TrajectoryPoint, TrajectorySet};

#[derive(Debug, Clone)]
pub struct SynthSpec {
    pub classes: usize,
    pub videos_per_class: usize,
    pub train_per_class: usize,
    pub layers: Vec<String>,
    pub map_dims: MapDims,
    pub video_dims: VideoDims,
    pub trajectories_per_video: usize,
    pub trajectory_len: usize,
    /// Edge length of the square hotspot, in map cells.
    pub hotspot_cells: usize,
    /// Class-independent strong blobs per stream.
    pub distractors_per_stream: usize,
    /// Probability that a background cell-frame gets a small activation.
    pub sprinkle: f64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            classes: 4,
            videos_per_class: 14,
            train_per_class: 8,
            layers: vec!["conv3".to_string()],
            map_dims: MapDims {
                width: 14,
                height: 14,
                channels: 32,
                frames: 16,
            },
            video_dims: VideoDims {
                width: 56,
                height: 56,
            },
            trajectories_per_video: 90,
            trajectory_len: 15,
            hotspot_cells: 3,
            distractors_per_stream: 3,
            sprinkle: 0.02,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        if self.classes < 2 {
            return Err(CpdError::InvalidParam {
                reason: "need at least two classes".into(),
            });
        }
        if self.videos_per_class == 0 || self.train_per_class == 0 {
            return Err(CpdError::InvalidParam {
                reason: "need at least one video per class and split".into(),
            });
        }
        if self.train_per_class >= self.videos_per_class {
            return Err(CpdError::InvalidParam {
                reason: "every class needs at least one test video".into(),
            });
        }
        if self.layers.is_empty() {
            return Err(CpdError::EmptyInput {
                what: "layer list".into(),
            });
        }
        if self.map_dims.channels < self.classes {
            return Err(CpdError::InvalidParam {
                reason: "need at least one channel per class".into(),
            });
        }
        if self.hotspot_cells == 0
            || self.hotspot_cells > self.map_dims.width
            || self.hotspot_cells > self.map_dims.height
        {
            return Err(CpdError::InvalidParam {
                reason: "hotspot must fit inside the map grid".into(),
            });
        }
        if self.trajectory_len == 0 || self.trajectory_len > self.map_dims.frames {
            return Err(CpdError::InvalidParam {
                reason: "trajectory length must fit inside the frame count".into(),
            });
        }
        if self.trajectories_per_video < 3 {
            return Err(CpdError::InvalidParam {
                reason: "need at least three trajectories per video".into(),
            });
        }
        if (self.video_dims.width as usize) < self.map_dims.width
            || (self.video_dims.height as usize) < self.map_dims.height
        {
            return Err(CpdError::InvalidDims {
                reason: "video must be at least as large as the map grid".into(),
            });
        }
        if !(0.0..=1.0).contains(&self.sprinkle) {
            return Err(CpdError::InvalidParam {
                reason: "sprinkle must be a probability".into(),
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SynthSummary {
    pub videos: usize,
    pub train: usize,
    pub test: usize,
    pub classes: usize,
}

#[derive(Clone)]
struct CellRect {
    x: usize,
    y: usize,
    side: usize,
}

impl CellRect {
    fn intersects(&self, other: &CellRect, margin: usize) -> bool {
        let ax0 = self.x.saturating_sub(margin);
        let ay0 = self.y.saturating_sub(margin);
        let ax1 = self.x + self.side + margin;
        let ay1 = self.y + self.side + margin;
        other.x < ax1 && other.x + other.side > ax0 && other.y < ay1 && other.y + other.side > ay0
    }
}

/// Draw distractor rectangles for one stream, avoiding the hotspot and every
/// rectangle already claimed by either stream. Each distractor is therefore
/// active in exactly one stream.
fn place_distractors(
    rng: &mut ChaCha8Rng,
    spec: &SynthSpec,
    hotspot: &CellRect,
    keep_out: &mut Vec<CellRect>,
) -> Vec<CellRect> {
    let d = spec.map_dims;
    let mut rects = Vec::new();
    for _ in 0..spec.distractors_per_stream {
        for _ in 0..50 {
            let r = CellRect {
                x: rng.random_range(0..=d.width - 2),
                y: rng.random_range(0..=d.height - 2),
                side: 2,
            };
            if !r.intersects(hotspot, 1) && keep_out.iter().all(|k| !r.intersects(k, 0)) {
                keep_out.push(r.clone());
                rects.push(r);
                break;
            }
        }
    }
    rects
}

fn fill_stream(
    rng: &mut ChaCha8Rng,
    spec: &SynthSpec,
    stream: Stream,
    hotspot: &CellRect,
    class_channels: std::ops::Range<usize>,
    distractors: &[CellRect],
) -> FeatureMap {
    let d = spec.map_dims;
    let mut data = vec![0.0f64; d.value_count()];

    // Hotspot: every channel fires intermittently; the class's channel group
    // fires somewhat more often than the rest. Amplitudes are identically
    // distributed everywhere, so only the firing density separates classes,
    // and density is preserved by both normalization modes. The contrast is
    // kept mild so the class clouds overlap: codebooks then quantize the
    // class-neutral structure and the class shift survives as a residual.
    for t in 0..d.frames {
        for y in hotspot.y..hotspot.y + hotspot.side {
            for x in hotspot.x..hotspot.x + hotspot.side {
                for n in 0..d.channels {
                    let p = if class_channels.contains(&n) { 0.62 } else { 0.45 };
                    if rng.random::<f64>() < p {
                        data[d.index(x, y, n, t)] = 6.0 + rng.random::<f64>() * 4.0;
                    }
                }
            }
        }
    }

    // Distractors: strong blobs on random channels, present in this stream
    // only. The channel draw is per video, so the blob looks like a real
    // (but class-independent) object to a per-stream descriptor.
    for r in distractors {
        let channels: Vec<usize> = (0..4).map(|_| rng.random_range(0..d.channels)).collect();
        for t in 0..d.frames {
            for y in r.y..r.y + r.side {
                for x in r.x..r.x + r.side {
                    for &n in &channels {
                        data[d.index(x, y, n, t)] = 6.0 + rng.random::<f64>() * 4.0;
                    }
                }
            }
        }
    }

    // Sparse background sprinkle: one weak random channel per chosen
    // cell-frame. Channel normalization inflates these to full scale, which
    // is exactly the noise the cross-stream weighting is meant to gate out.
    for t in 0..d.frames {
        for y in 0..d.height {
            for x in 0..d.width {
                if rng.random::<f64>() < spec.sprinkle {
                    let n = rng.random_range(0..d.channels);
                    let idx = d.index(x, y, n, t);
                    if data[idx] == 0.0 {
                        data[idx] = 0.2 + rng.random::<f64>() * 0.6;
                    }
                }
            }
        }
    }

    FeatureMap::new(d, spec.video_dims, stream, data).expect("generated map is valid")
}

/// Pixel box covering `rect` expanded by `margin` cells, shrunk so that every
/// pixel in it still rounds into the expanded cell range.
fn pixel_box(rect: &CellRect, margin: usize, d: MapDims, sx: usize, sy: usize) -> (usize, usize, usize, usize) {
    let px0 = rect.x.saturating_sub(margin) * sx;
    let px1 = (((rect.x + rect.side + margin).min(d.width)) * sx).saturating_sub(sx / 2 + 1);
    let py0 = rect.y.saturating_sub(margin) * sy;
    let py1 = (((rect.y + rect.side + margin).min(d.height)) * sy).saturating_sub(sy / 2 + 1);
    (px0, px1, py0, py1)
}

fn make_trajectories(
    rng: &mut ChaCha8Rng,
    spec: &SynthSpec,
    hotspot: &CellRect,
    distractors: &[CellRect],
) -> TrajectorySet {
    let video = spec.video_dims;
    let d = spec.map_dims;
    let sx = video.width as usize / d.width;
    let sy = video.height as usize / d.height;
    let len = spec.trajectory_len;
    let t_max = d.frames - len;

    // Foreground trajectories sample the hotspot plus a one-cell margin, so
    // they range from grazing the edge to dwelling inside. The spread of
    // dwell times gives every video the same class-neutral magnitude
    // continuum. Distractor-bound trajectories do the same on the fake
    // blobs: they look like tracked motion to a per-stream descriptor, but
    // the other stream is quiet there.
    let foreground = spec.trajectories_per_video / 3;
    let tracker_share = if distractors.is_empty() {
        0
    } else {
        spec.trajectories_per_video / 3
    };
    let mut trajectories = Vec::with_capacity(spec.trajectories_per_video);
    for id in 0..spec.trajectories_per_video {
        let t0 = rng.random_range(0..=t_max) as u32;
        let target = if id < foreground {
            Some(hotspot)
        } else if id < foreground + tracker_share {
            Some(&distractors[(id - foreground) % distractors.len()])
        } else {
            None
        };
        let (mut x, mut y, (lo_x, hi_x, lo_y, hi_y)) = match target {
            Some(rect) => {
                let (px0, px1, py0, py1) = pixel_box(rect, 1, d, sx, sy);
                (
                    rng.random_range(px0..=px1) as u32,
                    rng.random_range(py0..=py1) as u32,
                    (px0 as i64, px1 as i64, py0 as i64, py1 as i64),
                )
            }
            None => (
                rng.random_range(0..video.width),
                rng.random_range(0..video.height),
                (0i64, video.width as i64 - 1, 0i64, video.height as i64 - 1),
            ),
        };
        let mut points = Vec::with_capacity(len);
        for l in 0..len {
            points.push(TrajectoryPoint {
                x,
                y,
                t: t0 + l as u32,
            });
            let nx = (x as i64 + rng.random_range(-2..=2)).clamp(lo_x, hi_x);
            let ny = (y as i64 + rng.random_range(-2..=2)).clamp(lo_y, hi_y);
            x = nx as u32;
            y = ny as u32;
        }
        trajectories.push(Trajectory::new(id, points).expect("generated points are consecutive"));
    }
    TrajectorySet::new(video, d.frames, trajectories).expect("generated points are in bounds")
}

/// Generate a corpus under `out_dir`: a manifest plus per-video trajectory
/// and tensor files. Fully determined by `spec` and `seed`.
pub fn generate_corpus(spec: &SynthSpec, seed: u64, out_dir: &Path) -> Result<SynthSummary> {
    spec.validate()?;
    let videos_dir = out_dir.join("videos");
    std::fs::create_dir_all(&videos_dir).map_err(|e| CpdError::io(&videos_dir, e))?;

    let group = spec.map_dims.channels / spec.classes;
    let mut manifest = String::new();
    let mut train = 0usize;
    let mut test = 0usize;

    for class in 0..spec.classes {
        for v in 0..spec.videos_per_class {
            let id = format!("c{class}_v{v:02}");
            let split = if v < spec.train_per_class {
                train += 1;
                "train"
            } else {
                test += 1;
                "test"
            };
            manifest.push_str(&format!("{id} {class} {split}\n"));

            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &["video", &id]));
            let d = spec.map_dims;
            let hotspot = CellRect {
                x: rng.random_range(0..=d.width - spec.hotspot_cells),
                y: rng.random_range(0..=d.height - spec.hotspot_cells),
                side: spec.hotspot_cells,
            };
            let class_channels = class * group..(class + 1) * group;

            let video_dir = videos_dir.join(&id);
            std::fs::create_dir_all(&video_dir).map_err(|e| CpdError::io(&video_dir, e))?;

            // Distractor positions are drawn once per video and shared by
            // all layers, like objects visible at every depth. Trajectories
            // can therefore track them.
            let mut keep_out = Vec::new();
            let spatial_rects = place_distractors(&mut rng, spec, &hotspot, &mut keep_out);
            let temporal_rects = place_distractors(&mut rng, spec, &hotspot, &mut keep_out);
            let all_rects: Vec<CellRect> = spatial_rects
                .iter()
                .chain(&temporal_rects)
                .cloned()
                .collect();

            let set = make_trajectories(&mut rng, spec, &hotspot, &all_rects);
            trajectory_file::save_trajectories(&video_dir.join("trajectories.txt"), &set)?;

            for layer in &spec.layers {
                let spatial = fill_stream(
                    &mut rng,
                    spec,
                    Stream::Spatial,
                    &hotspot,
                    class_channels.clone(),
                    &spatial_rects,
                );
                let temporal = fill_stream(
                    &mut rng,
                    spec,
                    Stream::Temporal,
                    &hotspot,
                    class_channels.clone(),
                    &temporal_rects,
                );
                tensor_file::save_feature_map(
                    &video_dir.join(format!("{layer}_spatial.cpdt")),
                    &spatial,
                )?;
                tensor_file::save_feature_map(
                    &video_dir.join(format!("{layer}_temporal.cpdt")),
                    &temporal,
                )?;
            }
        }
    }

    write_atomic(&out_dir.join("manifest.txt"), manifest.as_bytes())?;
    Ok(SynthSummary {
        videos: train + test,
        train,
        test,
        classes: spec.classes,
    })
}
