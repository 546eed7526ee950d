//! Rigid-body geometry shared by every stage of the pipeline.
//!
//! Positions are meters, normals are dimensionless directions, and all angles
//! are radians internally (degrees only appear at I/O boundaries). A [`Pose`]
//! maps sensor coordinates into world coordinates; direction vectors go
//! through the rotation part only, so translations never leak into normals.

use nalgebra::{Matrix3, Rotation3, Unit, Vector3};
use thiserror::Error;

/// 3-vector used for both positions (meters) and free directions.
pub type Vec3 = Vector3<f64>;

/// Tolerance for the unit-length check on [`UnitVec3`].
pub const UNIT_NORM_TOL: f64 = 1e-6;
/// Tolerance for orthonormality / determinant checks on [`Pose`] rotations.
pub const ROTATION_TOL: f64 = 1e-9;

#[derive(Debug, Error, PartialEq)]
pub enum GeomError {
    #[error("vector norm {norm} is not within {UNIT_NORM_TOL} of 1")]
    NotUnitLength { norm: f64 },
    #[error("cannot normalize a near-zero vector (norm {norm})")]
    ZeroVector { norm: f64 },
    #[error("rotation matrix is not orthonormal (max deviation {deviation})")]
    NotOrthonormal { deviation: f64 },
    #[error("rotation matrix determinant {det} is not +1")]
    NotProperRotation { det: f64 },
}

/// A vector guaranteed unit-length within [`UNIT_NORM_TOL`] at construction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UnitVec3(Vec3);

impl UnitVec3 {
    /// Wraps `v` after checking `| ||v|| - 1 | <= UNIT_NORM_TOL`.
    pub fn try_new(v: Vec3) -> Result<Self, GeomError> {
        let norm = v.norm();
        if (norm - 1.0).abs() <= UNIT_NORM_TOL {
            Ok(Self(v))
        } else {
            Err(GeomError::NotUnitLength { norm })
        }
    }

    /// Normalizes `v` to unit length; fails on near-zero input.
    pub fn normalize(v: Vec3) -> Result<Self, GeomError> {
        let norm = v.norm();
        if norm <= 1e-12 {
            return Err(GeomError::ZeroVector { norm });
        }
        Ok(Self(v / norm))
    }

    pub fn as_vec(&self) -> &Vec3 {
        &self.0
    }

    pub fn into_inner(self) -> Vec3 {
        self.0
    }

    /// Negated direction; unit length is preserved exactly.
    pub fn flipped(&self) -> Self {
        Self(-self.0)
    }
}

impl std::ops::Deref for UnitVec3 {
    type Target = Vec3;

    fn deref(&self) -> &Vec3 {
        &self.0
    }
}

/// Rigid transform: proper rotation plus translation.
///
/// Stored as an explicit 3x3 matrix (rather than a quaternion) so that file
/// round-trips of poses are bit-exact.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    rotation: Matrix3<f64>,
    translation: Vec3,
}

impl Pose {
    /// Validates `R^T R = I` and `det R = +1` within [`ROTATION_TOL`].
    pub fn new(rotation: Matrix3<f64>, translation: Vec3) -> Result<Self, GeomError> {
        let gram = rotation.transpose() * rotation;
        let deviation = (gram - Matrix3::identity()).abs().max();
        if deviation > ROTATION_TOL {
            return Err(GeomError::NotOrthonormal { deviation });
        }
        let det = rotation.determinant();
        if (det - 1.0).abs() > ROTATION_TOL {
            return Err(GeomError::NotProperRotation { det });
        }
        Ok(Self {
            rotation,
            translation,
        })
    }

    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vec3::zeros(),
        }
    }

    pub fn from_translation(translation: Vec3) -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation,
        }
    }

    /// Rotation about +z by `angle` radians, zero translation.
    pub fn from_rotation_z(angle: f64) -> Self {
        Self {
            rotation: *Rotation3::from_axis_angle(&Vector3::z_axis(), angle).matrix(),
            translation: Vec3::zeros(),
        }
    }

    /// Rotation about an arbitrary axis by `angle` radians.
    pub fn from_axis_angle(axis: &UnitVec3, angle: f64) -> Self {
        let axis = Unit::new_unchecked(*axis.as_vec());
        Self {
            rotation: *Rotation3::from_axis_angle(&axis, angle).matrix(),
            translation: Vec3::zeros(),
        }
    }

    pub fn from_parts(rotation: Matrix3<f64>, translation: Vec3) -> Result<Self, GeomError> {
        Self::new(rotation, translation)
    }

    pub fn rotation(&self) -> &Matrix3<f64> {
        &self.rotation
    }

    pub fn translation(&self) -> &Vec3 {
        &self.translation
    }

    /// `self ∘ other`: apply `other` first, then `self`.
    pub fn compose(&self, other: &Pose) -> Pose {
        Pose {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }

    pub fn inverse(&self) -> Pose {
        let rot_inv = self.rotation.transpose();
        Pose {
            rotation: rot_inv,
            translation: -(rot_inv * self.translation),
        }
    }

    /// Maps a position: `R p + t`.
    pub fn transform_point(&self, p: &Vec3) -> Vec3 {
        self.rotation * p + self.translation
    }

    /// Maps a direction: `R n` (translation discarded, norm preserved).
    pub fn transform_normal(&self, n: &Vec3) -> Vec3 {
        self.rotation * n
    }
}

/// Free-function forms of the pose maps, matching the rest of the crate's
/// operation-style API.
pub fn transform_point(pose: &Pose, p: &Vec3) -> Vec3 {
    pose.transform_point(p)
}

pub fn transform_normal(pose: &Pose, n: &Vec3) -> Vec3 {
    pose.transform_normal(n)
}
