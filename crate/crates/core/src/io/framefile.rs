//! Binary frame container. Byte layout (little-endian throughout):
//!
//! ```text
//! offset  size  field
//! 0       4     magic "LSNF"
//! 4       2     version (u16) = 1
//! 6       4     point_count (u32)
//! 10      2     flags (u16): bit0 = has normals, bit1 = normals only
//! 12      96    pose: rotation 3x3 row-major then translation, 12 x f64
//! 108     8     timestamp (f64, seconds)
//! 116     12*N  positions, N x (3 x f32)   -- absent when bit1 is set
//! ...     12*N  normals,   N x (3 x f32)   -- present when bit0 is set
//! ```
//!
//! Positions and normals are stored as f32 (1e-3 m quantization is far below
//! the sensor noise floor); poses and timestamps stay f64 so long pose chains
//! compose without drift. A file read into memory and written back is always
//! byte-identical; an in-memory frame survives a write/read round trip
//! bit-exactly whenever its coordinates are f32-representable.

use std::io::Cursor;
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use nalgebra::Matrix3;

use crate::frame::{Frame, NormalField};
use crate::geom::{Pose, UnitVec3, Vec3};

use super::IoError;

pub const FRAME_MAGIC: [u8; 4] = *b"LSNF";
pub const FRAME_VERSION: u16 = 1;
/// The file carries a normals block.
pub const FLAG_HAS_NORMALS: u16 = 1 << 0;
/// The positions block is omitted (normal-field files).
pub const FLAG_NORMALS_ONLY: u16 = 1 << 1;

const HEADER_LEN: usize = 116;

struct Header {
    count: u32,
    flags: u16,
    pose: Pose,
    timestamp: f64,
}

fn encode(
    count: u32,
    flags: u16,
    pose: &Pose,
    timestamp: f64,
    positions: Option<&[Vec3]>,
    normals: Option<&[Vec3]>,
) -> Vec<u8> {
    let blocks = positions.is_some() as usize + normals.is_some() as usize;
    let mut buf = Vec::with_capacity(HEADER_LEN + blocks * 12 * count as usize);
    buf.extend_from_slice(&FRAME_MAGIC);
    buf.write_u16::<LittleEndian>(FRAME_VERSION).unwrap();
    buf.write_u32::<LittleEndian>(count).unwrap();
    buf.write_u16::<LittleEndian>(flags).unwrap();
    let rot = pose.rotation();
    for r in 0..3 {
        for c in 0..3 {
            buf.write_f64::<LittleEndian>(rot[(r, c)]).unwrap();
        }
    }
    let t = pose.translation();
    for c in 0..3 {
        buf.write_f64::<LittleEndian>(t[c]).unwrap();
    }
    buf.write_f64::<LittleEndian>(timestamp).unwrap();
    for block in [positions, normals].into_iter().flatten() {
        for v in block {
            buf.write_f32::<LittleEndian>(v.x as f32).unwrap();
            buf.write_f32::<LittleEndian>(v.y as f32).unwrap();
            buf.write_f32::<LittleEndian>(v.z as f32).unwrap();
        }
    }
    buf
}

fn decode_header(bytes: &[u8]) -> Result<Header, IoError> {
    if bytes.len() < HEADER_LEN {
        return Err(IoError::TruncatedPayload {
            expected: HEADER_LEN,
            found: bytes.len(),
        });
    }
    let mut magic = [0u8; 4];
    magic.copy_from_slice(&bytes[..4]);
    if magic != FRAME_MAGIC {
        return Err(IoError::BadMagic {
            found: magic,
            expected: FRAME_MAGIC,
        });
    }
    let mut cur = Cursor::new(&bytes[4..HEADER_LEN]);
    let version = cur.read_u16::<LittleEndian>().unwrap();
    if version != FRAME_VERSION {
        return Err(IoError::UnsupportedVersion {
            found: version,
            supported: FRAME_VERSION,
        });
    }
    let count = cur.read_u32::<LittleEndian>().unwrap();
    let flags = cur.read_u16::<LittleEndian>().unwrap();
    let mut rot = Matrix3::zeros();
    for r in 0..3 {
        for c in 0..3 {
            rot[(r, c)] = cur.read_f64::<LittleEndian>().unwrap();
        }
    }
    let mut t = Vec3::zeros();
    for c in 0..3 {
        t[c] = cur.read_f64::<LittleEndian>().unwrap();
    }
    let timestamp = cur.read_f64::<LittleEndian>().unwrap();
    let pose = Pose::new(rot, t).map_err(|e| IoError::InvalidPose(e.to_string()))?;
    Ok(Header {
        count,
        flags,
        pose,
        timestamp,
    })
}

/// Checks the payload covers exactly the declared record count.
fn check_length(bytes: &[u8], count: u32, blocks: usize) -> Result<(), IoError> {
    let expected = HEADER_LEN + blocks * 12 * count as usize;
    if bytes.len() < expected {
        return Err(IoError::TruncatedPayload {
            expected,
            found: bytes.len(),
        });
    }
    if bytes.len() > expected {
        return Err(IoError::CountMismatch {
            declared: count,
            extra: bytes.len() - expected,
        });
    }
    Ok(())
}

fn read_vec3_block(bytes: &[u8], offset: usize, count: usize) -> Vec<Vec3> {
    let mut cur = Cursor::new(&bytes[offset..offset + 12 * count]);
    (0..count)
        .map(|_| {
            let x = cur.read_f32::<LittleEndian>().unwrap();
            let y = cur.read_f32::<LittleEndian>().unwrap();
            let z = cur.read_f32::<LittleEndian>().unwrap();
            Vec3::new(x as f64, y as f64, z as f64)
        })
        .collect()
}

pub fn write_frame(frame: &Frame, path: impl AsRef<Path>) -> Result<(), IoError> {
    let mut flags = 0u16;
    if frame.gt_normals.is_some() {
        flags |= FLAG_HAS_NORMALS;
    }
    let normals: Option<Vec<Vec3>> = frame
        .gt_normals
        .as_ref()
        .map(|ns| ns.iter().map(|n| *n.as_vec()).collect());
    let buf = encode(
        frame.points.len() as u32,
        flags,
        &frame.pose,
        frame.timestamp,
        Some(&frame.points),
        normals.as_deref(),
    );
    std::fs::write(path, buf)?;
    Ok(())
}

/// Reads a frame written by [`write_frame`]. The frame id is not part of the
/// file; it comes from the sequence manifest and defaults to 0 here.
pub fn read_frame(path: impl AsRef<Path>) -> Result<Frame, IoError> {
    let bytes = std::fs::read(&path).map_err(|e| map_missing(e, path.as_ref()))?;
    let header = decode_header(&bytes)?;
    if header.flags & FLAG_NORMALS_ONLY != 0 {
        return Err(IoError::UnexpectedLayout {
            expected: "frame (positions)",
            found: "normals-only field",
        });
    }
    let has_normals = header.flags & FLAG_HAS_NORMALS != 0;
    check_length(&bytes, header.count, 1 + has_normals as usize)?;

    let count = header.count as usize;
    let points = read_vec3_block(&bytes, HEADER_LEN, count);
    let gt_normals = if has_normals {
        let raw = read_vec3_block(&bytes, HEADER_LEN + 12 * count, count);
        let mut normals = Vec::with_capacity(count);
        for (index, n) in raw.into_iter().enumerate() {
            normals.push(UnitVec3::try_new(n).map_err(|_| IoError::InvalidNormal { index })?);
        }
        Some(normals)
    } else {
        None
    };

    Ok(Frame {
        points,
        gt_normals,
        pose: header.pose,
        timestamp: header.timestamp,
        frame_id: 0,
    })
}

/// Persists a normal field in the same container with the positions block
/// omitted (flags = has-normals | normals-only). The pose and timestamp of
/// the owning frame ride along so downstream tools keep the association.
pub fn write_normal_field(
    field: &NormalField,
    pose: &Pose,
    timestamp: f64,
    path: impl AsRef<Path>,
) -> Result<(), IoError> {
    let buf = encode(
        field.len() as u32,
        FLAG_HAS_NORMALS | FLAG_NORMALS_ONLY,
        pose,
        timestamp,
        None,
        Some(&field.normals),
    );
    std::fs::write(path, buf)?;
    Ok(())
}

/// Reads a normals-only file; entries are not forced onto the unit sphere
/// (refined fields may sit slightly off it).
pub fn read_normal_field(path: impl AsRef<Path>) -> Result<(NormalField, Pose, f64), IoError> {
    let bytes = std::fs::read(&path).map_err(|e| map_missing(e, path.as_ref()))?;
    let header = decode_header(&bytes)?;
    if header.flags & FLAG_NORMALS_ONLY == 0 || header.flags & FLAG_HAS_NORMALS == 0 {
        return Err(IoError::UnexpectedLayout {
            expected: "normals-only field",
            found: "frame",
        });
    }
    check_length(&bytes, header.count, 1)?;
    let normals = read_vec3_block(&bytes, HEADER_LEN, header.count as usize);
    Ok((NormalField::new(normals, 0), header.pose, header.timestamp))
}

fn map_missing(e: std::io::Error, path: &Path) -> IoError {
    if e.kind() == std::io::ErrorKind::NotFound {
        IoError::MissingFile {
            path: path.to_path_buf(),
        }
    } else {
        IoError::Io(e)
    }
}
