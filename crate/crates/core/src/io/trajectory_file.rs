//! Text trajectory container.
//!
//! Line 1: `V_w V_h T L K` (video pixel size, frame count, points per
//! trajectory, trajectory count). Then K lines, each with L comma-separated
//! `x,y,t` triples separated by whitespace. Coordinates are 0-based pixels;
//! frame indices must be consecutive within a trajectory.

use std::path::Path;

use crate::error::{CpdError, Result};
use crate::io::{read_all, write_atomic};
use crate::tensor::VideoDims;
use crate::trajectory::{Trajectory, TrajectoryPoint, TrajectorySet};

fn parse_err(path: &Path, line: usize, reason: impl Into<String>) -> CpdError {
    CpdError::Parse {
        path: path.to_path_buf(),
        line,
        reason: reason.into(),
    }
}

fn parse_u32(path: &Path, line: usize, field: &str, s: &str) -> Result<u32> {
    s.parse::<u32>()
        .map_err(|_| parse_err(path, line, format!("cannot parse {field} from {s:?}")))
}

pub fn load_trajectories(path: &Path) -> Result<TrajectorySet> {
    let bytes = read_all(path)?;
    let text = std::str::from_utf8(&bytes)
        .map_err(|_| parse_err(path, 1, "trajectory file is not valid UTF-8"))?;
    let mut lines = text.lines().enumerate();

    let (_, header) = lines
        .next()
        .ok_or_else(|| parse_err(path, 1, "missing header line"))?;
    let fields: Vec<&str> = header.split_whitespace().collect();
    if fields.len() != 5 {
        return Err(parse_err(
            path,
            1,
            format!("header needs 5 fields (V_w V_h T L K), found {}", fields.len()),
        ));
    }
    let video = VideoDims::new(
        parse_u32(path, 1, "video width", fields[0])?,
        parse_u32(path, 1, "video height", fields[1])?,
    )?;
    let frames = parse_u32(path, 1, "frame count", fields[2])? as usize;
    let length = parse_u32(path, 1, "trajectory length", fields[3])? as usize;
    let count = parse_u32(path, 1, "trajectory count", fields[4])? as usize;
    if length == 0 {
        return Err(parse_err(path, 1, "trajectory length must be positive"));
    }

    let mut trajectories = Vec::with_capacity(count);
    for (idx, line) in lines {
        let line_no = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        if trajectories.len() == count {
            return Err(parse_err(
                path,
                line_no,
                format!("more than the declared {count} trajectories"),
            ));
        }
        let id = trajectories.len();
        let mut points = Vec::with_capacity(length);
        let triples: Vec<&str> = line.split_whitespace().collect();
        if triples.len() != length {
            return Err(parse_err(
                path,
                line_no,
                format!("expected {length} points, found {}", triples.len()),
            ));
        }
        for triple in triples {
            let parts: Vec<&str> = triple.split(',').collect();
            if parts.len() != 3 {
                return Err(parse_err(
                    path,
                    line_no,
                    format!("point {triple:?} is not an x,y,t triple"),
                ));
            }
            points.push(TrajectoryPoint {
                x: parse_u32(path, line_no, "x", parts[0])?,
                y: parse_u32(path, line_no, "y", parts[1])?,
                t: parse_u32(path, line_no, "t", parts[2])?,
            });
        }
        trajectories.push(Trajectory::new(id, points)?);
    }
    if trajectories.len() != count {
        return Err(parse_err(
            path,
            text.lines().count(),
            format!("declared {count} trajectories, found {}", trajectories.len()),
        ));
    }
    TrajectorySet::new(video, frames, trajectories)
}

pub fn save_trajectories(path: &Path, set: &TrajectorySet) -> Result<()> {
    if set.is_empty() {
        return Err(CpdError::EmptyInput {
            what: "trajectory set to save".into(),
        });
    }
    let length = set.trajectories().first().map_or(0, |t| t.len());
    for t in set.trajectories() {
        if t.len() != length {
            return Err(CpdError::InvalidParam {
                reason: format!(
                    "trajectory {} has {} points, the file format needs a uniform {length}",
                    t.id(),
                    t.len()
                ),
            });
        }
    }
    let mut out = String::new();
    out.push_str(&format!(
        "{} {} {} {} {}\n",
        set.video().width,
        set.video().height,
        set.frames(),
        length,
        set.len()
    ));
    for t in set.trajectories() {
        let mut first = true;
        for p in t.points() {
            if !first {
                out.push(' ');
            }
            out.push_str(&format!("{},{},{}", p.x, p.y, p.t));
            first = false;
        }
        out.push('\n');
    }
    write_atomic(path, out.as_bytes())
}
