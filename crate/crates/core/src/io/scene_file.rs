//! Structured-text descriptions of scenes, sensors, and refinement settings.
//!
//! A scene file names the scene, lists primitive blocks, and may carry a
//! trajectory block describing straight-line sensor motion:
//!
//! ```toml
//! name = "street"
//!
//! [trajectory]
//! position = [0.0, 0.0, 1.8]
//! yaw_deg = 0.0
//! velocity = [5.0, 0.0, 0.0]
//! yaw_rate_deg_per_s = 0.0
//!
//! [[primitives]]
//! kind = "plane"
//! point = [0.0, 0.0, 0.0]
//! normal = [0.0, 0.0, 1.0]
//!
//! [[primitives]]
//! kind = "box"
//! min = [4.0, -6.0, 0.0]
//! max = [8.0, -4.0, 3.0]
//!
//! [[primitives]]
//! kind = "cylinder"
//! center = [-3.0, 5.0, 1.0]
//! axis = [0.0, 0.0, 1.0]
//! radius = 0.4
//! half_length = 1.0
//!
//! [[primitives]]
//! kind = "tunnel_arc"
//! center = [0.0, 20.0, 0.0]
//! axis = [1.0, 0.0, 0.0]
//! radius = 6.0
//! ```
//!
//! Direction fields (`normal`, `axis`) are normalized on load.

use std::path::Path;

use serde::Deserialize;

use crate::energy::RefineConfig;
use crate::frame::SensorConfig;
use crate::geom::{Pose, UnitVec3, Vec3};
use crate::sim::{PrimitiveShape, Scene, ScenePrimitive, Trajectory};

use super::IoError;

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PrimitiveSpec {
    Plane {
        point: [f64; 3],
        normal: [f64; 3],
        #[serde(default)]
        material: u32,
    },
    Box {
        min: [f64; 3],
        max: [f64; 3],
        #[serde(default)]
        material: u32,
    },
    Cylinder {
        center: [f64; 3],
        axis: [f64; 3],
        radius: f64,
        half_length: f64,
        #[serde(default)]
        material: u32,
    },
    TunnelArc {
        center: [f64; 3],
        axis: [f64; 3],
        radius: f64,
        #[serde(default)]
        material: u32,
    },
}

fn vec3(a: [f64; 3]) -> Vec3 {
    Vec3::new(a[0], a[1], a[2])
}

fn unit(a: [f64; 3], what: &str) -> Result<UnitVec3, IoError> {
    UnitVec3::normalize(vec3(a)).map_err(|e| IoError::InvalidScene(format!("{what}: {e}")))
}

impl PrimitiveSpec {
    fn build(&self) -> Result<ScenePrimitive, IoError> {
        let (shape, material_id) = match self {
            PrimitiveSpec::Plane {
                point,
                normal,
                material,
            } => (
                PrimitiveShape::Plane {
                    point: vec3(*point),
                    normal: unit(*normal, "plane normal")?,
                },
                *material,
            ),
            PrimitiveSpec::Box { min, max, material } => (
                PrimitiveShape::Aabb {
                    min: vec3(*min),
                    max: vec3(*max),
                },
                *material,
            ),
            PrimitiveSpec::Cylinder {
                center,
                axis,
                radius,
                half_length,
                material,
            } => (
                PrimitiveShape::Cylinder {
                    center: vec3(*center),
                    axis: unit(*axis, "cylinder axis")?,
                    radius: *radius,
                    half_length: *half_length,
                },
                *material,
            ),
            PrimitiveSpec::TunnelArc {
                center,
                axis,
                radius,
                material,
            } => (
                PrimitiveShape::TunnelArc {
                    center: vec3(*center),
                    axis: unit(*axis, "tunnel axis")?,
                    radius: *radius,
                },
                *material,
            ),
        };
        Ok(ScenePrimitive { shape, material_id })
    }
}

fn default_position() -> [f64; 3] {
    [0.0, 0.0, 1.8]
}

/// Straight-line sensor motion sampled at the sweep rate.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrajectorySpec {
    #[serde(default = "default_position")]
    pub position: [f64; 3],
    #[serde(default)]
    pub yaw_deg: f64,
    #[serde(default)]
    pub velocity: [f64; 3],
    #[serde(default)]
    pub yaw_rate_deg_per_s: f64,
}

impl Default for TrajectorySpec {
    fn default() -> Self {
        Self {
            position: default_position(),
            yaw_deg: 0.0,
            velocity: [0.0, 0.0, 0.0],
            yaw_rate_deg_per_s: 0.0,
        }
    }
}

impl TrajectorySpec {
    pub fn build(&self, frames: usize, rotation_hz: f64) -> Result<Trajectory, IoError> {
        let poses = (0..frames)
            .map(|i| {
                let t = i as f64 / rotation_hz;
                let yaw = (self.yaw_deg + self.yaw_rate_deg_per_s * t).to_radians();
                let position = vec3(self.position) + vec3(self.velocity) * t;
                Pose::new(*Pose::from_rotation_z(yaw).rotation(), position)
                    .expect("rotation about z is orthonormal")
            })
            .collect();
        Trajectory::with_rate(poses, rotation_hz, 0.0)
            .map_err(|e| IoError::InvalidScene(e.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneFile {
    pub name: String,
    #[serde(default)]
    pub trajectory: TrajectorySpec,
    pub primitives: Vec<PrimitiveSpec>,
}

/// Parses a scene file into the scene and its trajectory description.
pub fn load_scene(path: impl AsRef<Path>) -> Result<(Scene, TrajectorySpec), IoError> {
    let text = std::fs::read_to_string(&path).map_err(|e| missing(e, path.as_ref()))?;
    let file: SceneFile = toml::from_str(&text).map_err(|e| IoError::Config(e.to_string()))?;
    let primitives = file
        .primitives
        .iter()
        .map(|spec| spec.build())
        .collect::<Result<Vec<_>, _>>()?;
    let scene =
        Scene::new(file.name, primitives).map_err(|e| IoError::InvalidScene(e.to_string()))?;
    Ok((scene, file.trajectory))
}

pub fn load_sensor(path: impl AsRef<Path>) -> Result<SensorConfig, IoError> {
    let text = std::fs::read_to_string(&path).map_err(|e| missing(e, path.as_ref()))?;
    let sensor: SensorConfig = toml::from_str(&text).map_err(|e| IoError::Config(e.to_string()))?;
    sensor
        .validate()
        .map_err(|e| IoError::Config(e.to_string()))?;
    Ok(sensor)
}

pub fn load_refine_config(path: impl AsRef<Path>) -> Result<RefineConfig, IoError> {
    let text = std::fs::read_to_string(&path).map_err(|e| missing(e, path.as_ref()))?;
    let config: RefineConfig = toml::from_str(&text).map_err(|e| IoError::Config(e.to_string()))?;
    config
        .validate()
        .map_err(|e| IoError::Config(e.to_string()))?;
    Ok(config)
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
