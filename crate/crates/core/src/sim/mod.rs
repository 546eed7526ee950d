//! Analytic LiDAR simulation: a spinning multi-beam sensor ray-cast against
//! parametric scenes, yielding frames with exact ground-truth normals.
//!
//! Rays sweep azimuth-major (all beams fire per azimuth step, lowest beam
//! first). Range noise is drawn per hit along the ray and clamped to three
//! standard deviations so frames respect their documented range bound; the
//! dropout coin is drawn after the noise sample. Both draws happen for every
//! hit ray regardless of the configured magnitudes, so the random stream — and
//! therefore the output — depends only on the seed and the hit pattern.

mod primitives;

pub use primitives::{PrimitiveShape, RayHit, Scene, ScenePrimitive};

use std::collections::BTreeMap;

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::Normal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::frame::{Frame, FrameError, SensorConfig};
use crate::geom::{Pose, UnitVec3, Vec3};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("scene has no primitives")]
    EmptyScene,
    #[error("invalid primitive: {0}")]
    InvalidPrimitive(String),
    #[error(transparent)]
    InvalidSensor(#[from] FrameError),
    #[error("invalid trajectory: {0}")]
    BadTrajectory(String),
    #[error("duplicate scene name '{0}'")]
    DuplicateScene(String),
    #[error("{scenes} scene(s) cannot cover {splits} non-empty split(s)")]
    TooFewScenes { scenes: usize, splits: usize },
    #[error("split ratios must not all be zero")]
    ZeroRatios,
}

/// Sensor poses sampled at the sweep rate.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    stamped: Vec<(f64, Pose)>,
}

impl Trajectory {
    /// Validates strictly increasing timestamps spaced `1/rotation_hz` apart.
    pub fn new(stamped: Vec<(f64, Pose)>, rotation_hz: f64) -> Result<Self, SimError> {
        if stamped.is_empty() {
            return Err(SimError::BadTrajectory("trajectory is empty".into()));
        }
        if rotation_hz <= 0.0 {
            return Err(SimError::BadTrajectory("rotation_hz must be > 0".into()));
        }
        let dt = 1.0 / rotation_hz;
        for pair in stamped.windows(2) {
            let gap = pair[1].0 - pair[0].0;
            if gap <= 0.0 {
                return Err(SimError::BadTrajectory(
                    "timestamps must be strictly increasing".into(),
                ));
            }
            if (gap - dt).abs() > 1e-9 * dt.max(1.0) {
                return Err(SimError::BadTrajectory(format!(
                    "timestamp spacing {gap} does not match 1/rotation_hz = {dt}"
                )));
            }
        }
        Ok(Self { stamped })
    }

    /// Builds timestamps `start + i/rotation_hz` over the given poses.
    pub fn with_rate(poses: Vec<Pose>, rotation_hz: f64, start: f64) -> Result<Self, SimError> {
        if rotation_hz <= 0.0 {
            return Err(SimError::BadTrajectory("rotation_hz must be > 0".into()));
        }
        let stamped = poses
            .into_iter()
            .enumerate()
            .map(|(i, pose)| (start + i as f64 / rotation_hz, pose))
            .collect();
        Self::new(stamped, rotation_hz)
    }

    pub fn poses(&self) -> &[(f64, Pose)] {
        &self.stamped
    }

    pub fn len(&self) -> usize {
        self.stamped.len()
    }

    pub fn is_empty(&self) -> bool {
        self.stamped.is_empty()
    }
}

/// Beam elevations in radians, lowest beam first.
fn beam_elevations(sensor: &SensorConfig) -> Vec<f64> {
    let lower = sensor.lower_fov_deg.to_radians();
    let upper = sensor.upper_fov_deg.to_radians();
    let n = sensor.beams as usize;
    if n == 1 {
        return vec![0.5 * (lower + upper)];
    }
    (0..n)
        .map(|b| lower + (upper - lower) * b as f64 / (n - 1) as f64)
        .collect()
}

/// One full sweep of the sensor from `pose`, deterministic for a fixed seed.
///
/// Hits beyond `max_range_m` are discarded; ground-truth normals are
/// evaluated at the un-noised hit point, flipped to face the sensor, and
/// expressed in the sensor frame. A sweep that hits nothing returns an empty
/// frame rather than an error.
pub fn raycast_frame(
    scene: &Scene,
    sensor: &SensorConfig,
    pose: &Pose,
    seed: u64,
) -> Result<Frame, SimError> {
    sensor.validate()?;

    let elevations = beam_elevations(sensor);
    let az_steps = sensor.azimuth_steps();
    let h_fov = sensor.horizontal_fov_deg.to_radians();

    let rotation = pose.rotation();
    let rot_inv = rotation.transpose();
    let origin = *pose.translation();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, sensor.noise_std_m)
        .map_err(|e| SimError::BadTrajectory(format!("noise distribution: {e}")))?;
    let noise_cap = 3.0 * sensor.noise_std_m;

    let mut points = Vec::new();
    let mut normals = Vec::new();

    for az_idx in 0..az_steps {
        let azimuth = -0.5 * h_fov + h_fov * az_idx as f64 / az_steps as f64;
        let (sin_az, cos_az) = azimuth.sin_cos();
        for &elevation in &elevations {
            let (sin_el, cos_el) = elevation.sin_cos();
            let dir_sensor = Vec3::new(cos_el * cos_az, cos_el * sin_az, sin_el);
            let dir_world = rotation * dir_sensor;

            let Some((_, hit)) = scene.intersect(&origin, &dir_world, sensor.max_range_m) else {
                continue;
            };

            let eta = noise.sample(&mut rng).clamp(-noise_cap, noise_cap);
            let drop_coin: f64 = rng.random();
            if drop_coin < sensor.drop_ratio {
                continue;
            }

            let range = (hit.range + eta).max(0.0);
            let mut n_world = hit.normal.into_inner();
            if n_world.dot(&dir_world) > 0.0 {
                n_world = -n_world;
            }
            let n_sensor = rot_inv * n_world;

            points.push(dir_sensor * range);
            normals.push(UnitVec3::normalize(n_sensor).expect("rotated unit normal"));
        }
    }

    Ok(Frame {
        points,
        gt_normals: Some(normals),
        pose: *pose,
        timestamp: 0.0,
        frame_id: 0,
    })
}

/// One frame per trajectory pose with sequential ids; per-frame seeds are
/// drawn from a generator seeded by `master_seed`, so any frame can be
/// regenerated independently.
pub fn simulate_sequence(
    scene: &Scene,
    sensor: &SensorConfig,
    trajectory: &Trajectory,
    master_seed: u64,
) -> Result<Vec<Frame>, SimError> {
    if trajectory.is_empty() {
        return Err(SimError::BadTrajectory("trajectory is empty".into()));
    }
    let mut seeder = ChaCha8Rng::seed_from_u64(master_seed);
    let seeds: Vec<u64> = (0..trajectory.len()).map(|_| seeder.random()).collect();

    trajectory
        .poses()
        .iter()
        .zip(seeds)
        .enumerate()
        .map(|(idx, (&(timestamp, pose), seed))| {
            let mut frame = raycast_frame(scene, sensor, &pose, seed)?;
            frame.frame_id = idx as u32;
            frame.timestamp = timestamp;
            Ok(frame)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
    Val,
}

impl std::fmt::Display for Split {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Split::Train => "train",
            Split::Test => "test",
            Split::Val => "val",
        };
        f.write_str(s)
    }
}

impl std::str::FromStr for Split {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "train" => Ok(Split::Train),
            "test" => Ok(Split::Test),
            "val" => Ok(Split::Val),
            other => Err(format!("unknown split '{other}'")),
        }
    }
}

/// Scene-name to split assignment; whole scenes move together so frames from
/// one scene can never appear in two splits.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitManifest {
    pub assignments: BTreeMap<String, Split>,
}

impl SplitManifest {
    pub fn split_of(&self, scene: &str) -> Option<Split> {
        self.assignments.get(scene).copied()
    }

    pub fn count(&self, split: Split) -> usize {
        self.assignments.values().filter(|&&s| s == split).count()
    }
}

/// Partitions scenes (never frames) into train/test/val proportional to
/// `ratios`, keeping input order: the first block of scenes becomes train,
/// the next test, the last val. Counts follow the largest-remainder rule and
/// every non-zero split receives at least one scene.
pub fn assign_splits(
    scenes: &[String],
    ratios: (u32, u32, u32),
) -> Result<SplitManifest, SimError> {
    let weights = [ratios.0 as f64, ratios.1 as f64, ratios.2 as f64];
    let total_w: f64 = weights.iter().sum();
    if total_w == 0.0 {
        return Err(SimError::ZeroRatios);
    }

    let mut seen = std::collections::BTreeSet::new();
    for s in scenes {
        if !seen.insert(s.as_str()) {
            return Err(SimError::DuplicateScene(s.clone()));
        }
    }

    let n = scenes.len();
    let nonzero = weights.iter().filter(|&&w| w > 0.0).count();
    if n < nonzero {
        return Err(SimError::TooFewScenes {
            scenes: n,
            splits: nonzero,
        });
    }

    let exact: Vec<f64> = weights.iter().map(|w| n as f64 * w / total_w).collect();
    let mut counts: Vec<usize> = exact.iter().map(|e| e.floor() as usize).collect();
    let mut leftover = n - counts.iter().sum::<usize>();
    // Largest remainder first; ties fall to the earlier split.
    let mut by_frac: Vec<usize> = (0..3).collect();
    by_frac.sort_by(|&a, &b| {
        let fa = exact[a] - exact[a].floor();
        let fb = exact[b] - exact[b].floor();
        fb.partial_cmp(&fa).unwrap().then(a.cmp(&b))
    });
    for &idx in by_frac.iter().cycle() {
        if leftover == 0 {
            break;
        }
        counts[idx] += 1;
        leftover -= 1;
    }
    // Guarantee each weighted split at least one scene.
    for i in 0..3 {
        if weights[i] > 0.0 && counts[i] == 0 {
            let donor = (0..3)
                .filter(|&j| counts[j] > 1)
                .max_by_key(|&j| counts[j])
                .expect("n >= nonzero splits guarantees a donor");
            counts[donor] -= 1;
            counts[i] += 1;
        }
    }

    let splits = [Split::Train, Split::Test, Split::Val];
    let mut assignments = BTreeMap::new();
    let mut cursor = 0usize;
    for (split, &count) in splits.iter().zip(&counts) {
        for scene in &scenes[cursor..cursor + count] {
            assignments.insert(scene.clone(), *split);
        }
        cursor += count;
    }
    Ok(SplitManifest { assignments })
}
