//! Sequence manifests: a structured-text index of frame files in time order,
//! carrying the scene name, sensor configuration, and split tag.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::frame::{Frame, SensorConfig};
use crate::sim::Split;

use super::{framefile, IoError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameEntry {
    pub id: u32,
    pub path: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequenceManifest {
    pub scene: String,
    pub split: Split,
    pub sensor: SensorConfig,
    pub frames: Vec<FrameEntry>,
}

/// A manifest together with its loaded frames, in manifest order.
#[derive(Debug, Clone)]
pub struct Sequence {
    pub manifest: SequenceManifest,
    pub frames: Vec<Frame>,
}

pub fn write_manifest(manifest: &SequenceManifest, path: impl AsRef<Path>) -> Result<(), IoError> {
    let text = toml::to_string(manifest).map_err(|e| IoError::Config(e.to_string()))?;
    std::fs::write(path, text)?;
    Ok(())
}

pub fn read_manifest(path: impl AsRef<Path>) -> Result<SequenceManifest, IoError> {
    let text = std::fs::read_to_string(&path).map_err(|e| missing(e, path.as_ref()))?;
    let manifest: SequenceManifest =
        toml::from_str(&text).map_err(|e| IoError::Config(e.to_string()))?;
    let mut prev: Option<u32> = None;
    for entry in &manifest.frames {
        if let Some(p) = prev {
            if entry.id <= p {
                return Err(IoError::OutOfOrderIds {
                    prev: p,
                    next: entry.id,
                });
            }
        }
        prev = Some(entry.id);
    }
    Ok(manifest)
}

/// Loads the manifest and every referenced frame (paths resolve relative to
/// the manifest's directory). Frame ids come from the manifest entries.
pub fn read_sequence(path: impl AsRef<Path>) -> Result<Sequence, IoError> {
    let path = path.as_ref();
    let manifest = read_manifest(path)?;
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    let mut frames = Vec::with_capacity(manifest.frames.len());
    for entry in &manifest.frames {
        let frame_path = resolve(base, &entry.path);
        let mut frame = framefile::read_frame(&frame_path)?;
        frame.frame_id = entry.id;
        frames.push(frame);
    }
    Ok(Sequence { manifest, frames })
}

pub(crate) fn resolve(base: &Path, rel: &str) -> PathBuf {
    let p = Path::new(rel);
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

fn missing(e: std::io::Error, path: &Path) -> IoError {
    if e.kind() == std::io::ErrorKind::NotFound {
        IoError::MissingFile {
            path: path.to_path_buf(),
        }
    } else {
        IoError::Io(e)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::{Pose, Vec3};
    use tempfile::tempdir;

    fn small_frame(id: u32) -> Frame {
        Frame {
            points: vec![Vec3::new(id as f64, 0.0, -1.0)],
            gt_normals: None,
            pose: Pose::identity(),
            timestamp: id as f64 * 0.1,
            frame_id: id,
        }
    }

    fn manifest_for(n: u32) -> SequenceManifest {
        SequenceManifest {
            scene: "demo".into(),
            split: Split::Train,
            sensor: SensorConfig::default(),
            frames: (0..n)
                .map(|id| FrameEntry {
                    id,
                    path: format!("frame_{id:06}.lsnf"),
                })
                .collect(),
        }
    }

    #[test]
    fn two_frame_sequence_loads_in_order() {
        let dir = tempdir().unwrap();
        for id in 0..2 {
            framefile::write_frame(
                &small_frame(id),
                dir.path().join(format!("frame_{id:06}.lsnf")),
            )
            .unwrap();
        }
        let manifest_path = dir.path().join("sequence.toml");
        write_manifest(&manifest_for(2), &manifest_path).unwrap();

        let seq = read_sequence(&manifest_path).unwrap();
        assert_eq!(seq.frames.len(), 2);
        assert_eq!(seq.frames[0].frame_id, 0);
        assert_eq!(seq.frames[1].frame_id, 1);
        assert_eq!(seq.manifest.split, Split::Train);
    }

    #[test]
    fn missing_frame_file_names_the_path() {
        let dir = tempdir().unwrap();
        let manifest_path = dir.path().join("sequence.toml");
        write_manifest(&manifest_for(1), &manifest_path).unwrap();
        match read_sequence(&manifest_path) {
            Err(IoError::MissingFile { path }) => {
                assert!(path.to_string_lossy().contains("frame_000000.lsnf"));
            }
            other => panic!("expected MissingFile, got {other:?}"),
        }
    }

    #[test]
    fn shuffled_ids_are_rejected() {
        let dir = tempdir().unwrap();
        let mut manifest = manifest_for(2);
        manifest.frames.swap(0, 1);
        let manifest_path = dir.path().join("sequence.toml");
        write_manifest(&manifest, &manifest_path).unwrap();
        assert!(matches!(
            read_manifest(&manifest_path),
            Err(IoError::OutOfOrderIds { prev: 1, next: 0 })
        ));
    }

    #[test]
    fn manifest_text_roundtrips() {
        let dir = tempdir().unwrap();
        let manifest_path = dir.path().join("sequence.toml");
        let manifest = manifest_for(3);
        write_manifest(&manifest, &manifest_path).unwrap();
        let back = read_manifest(&manifest_path).unwrap();
        assert_eq!(back, manifest);
    }
}
