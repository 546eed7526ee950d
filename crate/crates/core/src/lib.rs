//! Synthetic LiDAR point clouds with exact ground-truth surface normals,
//! classical per-point normal estimation, and refinement of the estimated
//! fields by descending a graph-total-variation objective, evaluated with an
//! angular-error protocol.
//!
//! The pipeline, end to end:
//!
//! 1. [`sim`] ray-casts parametric scenes with a spinning multi-beam sensor,
//!    producing [`frame::Frame`]s whose ground-truth normals are analytic.
//! 2. [`estimate`] fits per-point normals classically (tangent plane or
//!    osculating jet), selected by name through a small registry.
//! 3. [`graph`] builds the weighted k-neighborhood and cross-frame graphs.
//! 4. [`energy`] evaluates the data / spatial / temporal / unit-norm terms
//!    with analytic gradients and refines fields by monotone descent.
//! 5. [`metrics`] and [`density`] score the result: angular-error summaries
//!    and spherical kernel density maps of normal directions.
//! 6. [`io`] persists frames, normal fields, manifests, and configs.

pub mod density;
pub mod energy;
pub mod estimate;
pub mod frame;
pub mod geom;
pub mod graph;
pub mod io;
pub mod metrics;
pub mod sim;
pub mod spatial;

pub use frame::{Frame, NormalField, SensorConfig};
pub use geom::{Pose, UnitVec3, Vec3};
