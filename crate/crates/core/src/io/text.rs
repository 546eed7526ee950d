//! Whitespace-separated text interchange: `x y z` or `x y z nx ny nz` per
//! line, `#` comments ignored. Importing external datasets goes through here.

use std::path::Path;

use crate::frame::Frame;
use crate::geom::{Pose, UnitVec3, Vec3};

use super::IoError;

/// Parses a text point file into a frame with identity pose. Every data line
/// must have the same column count (3 or 6).
pub fn read_xyz_text(path: impl AsRef<Path>) -> Result<Frame, IoError> {
    let text = std::fs::read_to_string(&path)?;
    let mut points = Vec::new();
    let mut normals: Option<Vec<UnitVec3>> = None;

    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<f64> = line
            .split_whitespace()
            .map(|tok| {
                tok.parse::<f64>().map_err(|_| {
                    IoError::MalformedText(format!("line {}: bad number '{tok}'", lineno + 1))
                })
            })
            .collect::<Result<_, _>>()?;
        match fields.len() {
            3 => {
                if normals.as_ref().is_some_and(|n| !n.is_empty()) {
                    return Err(IoError::MalformedText(format!(
                        "line {}: expected 6 columns, got 3",
                        lineno + 1
                    )));
                }
                points.push(Vec3::new(fields[0], fields[1], fields[2]));
            }
            6 => {
                if normals.is_none() && !points.is_empty() {
                    return Err(IoError::MalformedText(format!(
                        "line {}: expected 3 columns, got 6",
                        lineno + 1
                    )));
                }
                points.push(Vec3::new(fields[0], fields[1], fields[2]));
                let n = UnitVec3::normalize(Vec3::new(fields[3], fields[4], fields[5])).map_err(
                    |_| IoError::MalformedText(format!("line {}: zero normal", lineno + 1)),
                )?;
                normals.get_or_insert_with(Vec::new).push(n);
            }
            other => {
                return Err(IoError::MalformedText(format!(
                    "line {}: expected 3 or 6 columns, got {other}",
                    lineno + 1
                )))
            }
        }
    }

    Ok(Frame {
        points,
        gt_normals: normals,
        pose: Pose::identity(),
        timestamp: 0.0,
        frame_id: 0,
    })
}

pub fn write_xyz_text(frame: &Frame, path: impl AsRef<Path>) -> Result<(), IoError> {
    use std::fmt::Write;
    let mut out = String::new();
    match &frame.gt_normals {
        Some(normals) => {
            for (p, n) in frame.points.iter().zip(normals) {
                writeln!(out, "{} {} {} {} {} {}", p.x, p.y, p.z, n.x, n.y, n.z).unwrap();
            }
        }
        None => {
            for p in &frame.points {
                writeln!(out, "{} {} {}", p.x, p.y, p.z).unwrap();
            }
        }
    }
    std::fs::write(path, out)?;
    Ok(())
}
