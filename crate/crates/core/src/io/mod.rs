//! Dataset persistence: binary frame files, sequence manifests, and the
//! structured-text scene / sensor / refinement configs.

mod framefile;
mod manifest;
mod scene_file;
mod text;

pub use framefile::{
    read_frame, read_normal_field, write_frame, write_normal_field, FLAG_HAS_NORMALS,
    FLAG_NORMALS_ONLY, FRAME_MAGIC, FRAME_VERSION,
};
pub use manifest::{
    read_manifest, read_sequence, write_manifest, FrameEntry, Sequence, SequenceManifest,
};
pub use scene_file::{
    load_refine_config, load_scene, load_sensor, PrimitiveSpec, SceneFile, TrajectorySpec,
};
pub use text::{read_xyz_text, write_xyz_text};

use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum IoError {
    #[error("bad magic {found:?}, expected {expected:?}")]
    BadMagic { found: [u8; 4], expected: [u8; 4] },
    #[error("unsupported frame-file version {found} (supported: {supported})")]
    UnsupportedVersion { found: u16, supported: u16 },
    #[error("truncated payload: need {expected} bytes, file has {found}")]
    TruncatedPayload { expected: usize, found: usize },
    #[error("count mismatch: {declared} records declared but {extra} trailing byte(s)")]
    CountMismatch { declared: u32, extra: usize },
    #[error("file stores {found}, expected {expected}")]
    UnexpectedLayout {
        expected: &'static str,
        found: &'static str,
    },
    #[error("stored normal {index} is not unit length")]
    InvalidNormal { index: usize },
    #[error("stored pose is invalid: {0}")]
    InvalidPose(String),
    #[error("missing file: {path}")]
    MissingFile { path: PathBuf },
    #[error("frame ids out of order: {prev} followed by {next}")]
    OutOfOrderIds { prev: u32, next: u32 },
    #[error("invalid scene description: {0}")]
    InvalidScene(String),
    #[error("malformed text point file: {0}")]
    MalformedText(String),
    #[error("config error: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
