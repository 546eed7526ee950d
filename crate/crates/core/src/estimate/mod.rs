//! Classical per-point normal estimators.
//!
//! Every estimator implements [`NormalEstimator`] and is reachable by name
//! through [`create_estimator`], so front-ends can select the fitter at
//! runtime (`pca`, `jet`). Outputs are viewpoint-oriented: each normal is
//! flipped, if necessary, to face the sensor at the origin of the frame.
//!
//! Degenerate neighborhoods (collinear points, rank-deficient fits) do not
//! abort a frame: the affected point receives the placeholder normal (0,0,1)
//! and its index is reported, since sparse LiDAR routinely produces such
//! neighborhoods and downstream refinement can repair them.

mod jet;
mod pca;

pub use jet::{estimate_jet, JetEstimator};
pub use pca::{estimate_pca, PcaEstimator};

use thiserror::Error;

use crate::frame::{Frame, NormalField};
use crate::geom::Vec3;

/// Neighborhood size used by the reference evaluation setup.
pub const DEFAULT_NEIGHBORHOOD: usize = 32;
/// Osculating-jet polynomial degree; 2 is the standard choice.
pub const DEFAULT_JET_DEGREE: usize = 2;
/// Normal emitted for points whose neighborhood admits no stable fit.
pub const PLACEHOLDER_NORMAL: Vec3 = Vec3::new(0.0, 0.0, 1.0);

#[derive(Debug, Error, PartialEq)]
pub enum EstimateError {
    #[error("neighborhood size {k} is below the minimum {min} for this estimator")]
    NeighborhoodTooSmall { k: usize, min: usize },
    #[error("frame has {actual} points but the estimator needs at least {required}")]
    TooFewPoints { required: usize, actual: usize },
    #[error("normal field length {field} does not match frame length {frame}")]
    LengthMismatch { field: usize, frame: usize },
    #[error("unsupported jet degree {degree} (supported: 1..=4)")]
    UnsupportedDegree { degree: usize },
}

/// An estimated field plus the indices that fell back to the placeholder.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimateOutput {
    pub field: NormalField,
    pub degenerate: Vec<u32>,
}

/// A per-point normal fitter selectable by name.
pub trait NormalEstimator: Send + Sync {
    fn name(&self) -> &'static str;
    fn estimate(&self, frame: &Frame) -> Result<EstimateOutput, EstimateError>;
}

/// Runtime parameters shared by the registered estimators.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EstimatorParams {
    pub k: usize,
    pub degree: usize,
}

impl Default for EstimatorParams {
    fn default() -> Self {
        Self {
            k: DEFAULT_NEIGHBORHOOD,
            degree: DEFAULT_JET_DEGREE,
        }
    }
}

/// Looks up an estimator by name. Returns `None` for unknown names; see
/// [`estimator_names`] for the registry contents.
pub fn create_estimator(name: &str, params: &EstimatorParams) -> Option<Box<dyn NormalEstimator>> {
    match name {
        "pca" => Some(Box::new(PcaEstimator { k: params.k })),
        "jet" => Some(Box::new(JetEstimator {
            k: params.k,
            degree: params.degree,
        })),
        _ => None,
    }
}

pub fn estimator_names() -> &'static [&'static str] {
    &["pca", "jet"]
}

/// Flips each normal that points away from the sensor (the origin of the
/// sensor frame): `n` becomes `-n` whenever `n . p > 0`. Ties (`n . p = 0`)
/// keep their sign, which makes the operation idempotent.
pub fn orient_viewpoint(field: &NormalField, frame: &Frame) -> Result<NormalField, EstimateError> {
    if field.len() != frame.len() {
        return Err(EstimateError::LengthMismatch {
            field: field.len(),
            frame: frame.len(),
        });
    }
    let normals = field
        .normals
        .iter()
        .zip(&frame.points)
        .map(|(n, p)| if n.dot(p) > 0.0 { -n } else { *n })
        .collect();
    Ok(NormalField::new(normals, field.frame_id))
}
