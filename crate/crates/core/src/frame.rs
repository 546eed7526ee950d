//! Sweep-level data: LiDAR frames, per-point normal fields, and the virtual
//! sensor configuration.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom::{Pose, UnitVec3, Vec3};

#[derive(Debug, Error, PartialEq)]
pub enum FrameError {
    #[error("ground-truth normals length {normals} does not match point count {points}")]
    NormalCountMismatch { points: usize, normals: usize },
    #[error("sensor config invalid: {0}")]
    InvalidSensor(String),
}

/// One LiDAR sweep: points in the sensor frame plus the sensor pose that maps
/// them into world coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub points: Vec<Vec3>,
    /// Exact surface normals in the sensor frame, when the source provides them.
    pub gt_normals: Option<Vec<UnitVec3>>,
    /// Sensor-to-world transform.
    pub pose: Pose,
    /// Seconds.
    pub timestamp: f64,
    pub frame_id: u32,
}

impl Frame {
    pub fn new(
        points: Vec<Vec3>,
        gt_normals: Option<Vec<UnitVec3>>,
        pose: Pose,
        timestamp: f64,
        frame_id: u32,
    ) -> Result<Self, FrameError> {
        if let Some(normals) = &gt_normals {
            if normals.len() != points.len() {
                return Err(FrameError::NormalCountMismatch {
                    points: points.len(),
                    normals: normals.len(),
                });
            }
        }
        Ok(Self {
            points,
            gt_normals,
            pose,
            timestamp,
            frame_id,
        })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Ground-truth normals as a plain [`NormalField`], if present.
    pub fn gt_field(&self) -> Option<NormalField> {
        self.gt_normals.as_ref().map(|ns| NormalField {
            normals: ns.iter().map(|n| *n.as_vec()).collect(),
            frame_id: self.frame_id,
        })
    }
}

/// Per-point normal vectors aligned with a [`Frame`].
///
/// Entries may be slightly off the unit sphere while an optimizer is running;
/// [`NormalField::finalized`] projects them back and reports any that cannot
/// be normalized.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalField {
    pub normals: Vec<Vec3>,
    pub frame_id: u32,
}

impl NormalField {
    pub fn new(normals: Vec<Vec3>, frame_id: u32) -> Self {
        Self { normals, frame_id }
    }

    pub fn len(&self) -> usize {
        self.normals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.normals.is_empty()
    }

    /// Projects every entry onto the unit sphere. Near-zero entries are left
    /// untouched and their indices returned.
    pub fn finalized(&self) -> (NormalField, Vec<usize>) {
        let mut degenerate = Vec::new();
        let normals = self
            .normals
            .iter()
            .enumerate()
            .map(|(i, n)| {
                let norm = n.norm();
                if norm <= 1e-12 {
                    degenerate.push(i);
                    *n
                } else {
                    n / norm
                }
            })
            .collect();
        (
            NormalField {
                normals,
                frame_id: self.frame_id,
            },
            degenerate,
        )
    }

    /// True when every entry is unit length within `tol`.
    pub fn all_unit(&self, tol: f64) -> bool {
        self.normals.iter().all(|n| (n.norm() - 1.0).abs() <= tol)
    }
}

fn default_beams() -> u32 {
    64
}
fn default_upper_fov() -> f64 {
    10.0
}
fn default_lower_fov() -> f64 {
    -30.0
}
fn default_horizontal_fov() -> f64 {
    360.0
}
fn default_max_range() -> f64 {
    100.0
}
fn default_points_per_second() -> u64 {
    2_000_000
}
fn default_rotation_hz() -> f64 {
    10.0
}
fn default_drop_ratio() -> f64 {
    0.45
}
fn default_noise_std() -> f64 {
    0.02
}

/// Spinning multi-beam sensor description. Defaults mirror a common 64-beam
/// automotive unit: 10 deg upper / -30 deg lower field of view, 100 m range,
/// 2M points/s at 10 Hz, 45% dropout, and 2 cm range noise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SensorConfig {
    #[serde(default = "default_beams")]
    pub beams: u32,
    #[serde(default = "default_upper_fov")]
    pub upper_fov_deg: f64,
    #[serde(default = "default_lower_fov")]
    pub lower_fov_deg: f64,
    #[serde(default = "default_horizontal_fov")]
    pub horizontal_fov_deg: f64,
    #[serde(default = "default_max_range")]
    pub max_range_m: f64,
    #[serde(default = "default_points_per_second")]
    pub points_per_second: u64,
    #[serde(default = "default_rotation_hz")]
    pub rotation_hz: f64,
    #[serde(default = "default_drop_ratio")]
    pub drop_ratio: f64,
    #[serde(default = "default_noise_std")]
    pub noise_std_m: f64,
}

impl Default for SensorConfig {
    fn default() -> Self {
        Self {
            beams: default_beams(),
            upper_fov_deg: default_upper_fov(),
            lower_fov_deg: default_lower_fov(),
            horizontal_fov_deg: default_horizontal_fov(),
            max_range_m: default_max_range(),
            points_per_second: default_points_per_second(),
            rotation_hz: default_rotation_hz(),
            drop_ratio: default_drop_ratio(),
            noise_std_m: default_noise_std(),
        }
    }
}

impl SensorConfig {
    pub fn validate(&self) -> Result<(), FrameError> {
        if self.beams < 1 {
            return Err(FrameError::InvalidSensor("beams must be >= 1".into()));
        }
        if self.lower_fov_deg >= self.upper_fov_deg {
            return Err(FrameError::InvalidSensor(
                "lower_fov_deg must be < upper_fov_deg".into(),
            ));
        }
        if !(self.horizontal_fov_deg > 0.0 && self.horizontal_fov_deg <= 360.0) {
            return Err(FrameError::InvalidSensor(
                "horizontal_fov_deg must be in (0, 360]".into(),
            ));
        }
        if self.max_range_m <= 0.0 {
            return Err(FrameError::InvalidSensor("max_range_m must be > 0".into()));
        }
        if self.rotation_hz <= 0.0 {
            return Err(FrameError::InvalidSensor("rotation_hz must be > 0".into()));
        }
        if !(0.0..=1.0).contains(&self.drop_ratio) {
            return Err(FrameError::InvalidSensor(
                "drop_ratio must be in [0, 1]".into(),
            ));
        }
        if self.noise_std_m < 0.0 || !self.noise_std_m.is_finite() {
            return Err(FrameError::InvalidSensor(
                "noise_std_m must be finite and >= 0".into(),
            ));
        }
        Ok(())
    }

    /// Ray directions per beam in one sweep; the remainder of
    /// `points_per_second / rotation_hz / beams` is discarded.
    pub fn azimuth_steps(&self) -> u64 {
        let per_sweep = (self.points_per_second as f64 / self.rotation_hz) as u64;
        per_sweep / self.beams as u64
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_reference_sensor() {
        let cfg = SensorConfig::default();
        assert_eq!(cfg.beams, 64);
        assert_eq!(cfg.upper_fov_deg, 10.0);
        assert_eq!(cfg.lower_fov_deg, -30.0);
        assert_eq!(cfg.max_range_m, 100.0);
        assert_eq!(cfg.points_per_second, 2_000_000);
        assert_eq!(cfg.rotation_hz, 10.0);
        assert_eq!(cfg.drop_ratio, 0.45);
        assert_eq!(cfg.noise_std_m, 0.02);
        cfg.validate().unwrap();
        // 2M / 10 Hz / 64 beams = 3125 azimuth steps.
        assert_eq!(cfg.azimuth_steps(), 3125);
    }

    #[test]
    fn sensor_validation_rejects_bad_fields() {
        let cfg = SensorConfig {
            beams: 0,
            ..SensorConfig::default()
        };
        assert!(cfg.validate().is_err());

        let cfg = SensorConfig {
            lower_fov_deg: 20.0,
            ..SensorConfig::default()
        };
        assert!(cfg.validate().is_err());

        let cfg = SensorConfig {
            drop_ratio: 1.2,
            ..SensorConfig::default()
        };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn frame_rejects_mismatched_normals() {
        let err = Frame::new(
            vec![Vec3::zeros(), Vec3::new(1.0, 0.0, 0.0)],
            Some(vec![UnitVec3::try_new(Vec3::new(0.0, 0.0, 1.0)).unwrap()]),
            Pose::identity(),
            0.0,
            0,
        );
        assert!(matches!(err, Err(FrameError::NormalCountMismatch { .. })));
    }

    #[test]
    fn finalize_normalizes_and_flags() {
        let field = NormalField::new(vec![Vec3::new(0.0, 0.0, 2.0), Vec3::zeros()], 0);
        let (unit, degenerate) = field.finalized();
        assert!(unit.normals[0].norm() - 1.0 < 1e-12);
        assert_eq!(degenerate, vec![1]);
        assert!(!field.all_unit(1e-6));
    }
}
