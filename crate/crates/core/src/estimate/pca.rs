//! Tangent-plane fitting: the normal is the eigenvector of the neighborhood
//! covariance with the smallest eigenvalue.

use nalgebra::{Matrix3, SymmetricEigen};
use rayon::prelude::*;

use crate::frame::{Frame, NormalField};
use crate::geom::Vec3;
use crate::spatial::KdTree;

use super::{orient_viewpoint, EstimateError, EstimateOutput, NormalEstimator, PLACEHOLDER_NORMAL};

/// A neighborhood is degenerate when its middle eigenvalue collapses against
/// the largest, i.e. the points are (numerically) collinear.
const COLLINEAR_REL_TOL: f64 = 1e-10;

pub struct PcaEstimator {
    pub k: usize,
}

impl NormalEstimator for PcaEstimator {
    fn name(&self) -> &'static str {
        "pca"
    }

    fn estimate(&self, frame: &Frame) -> Result<EstimateOutput, EstimateError> {
        estimate_pca(frame, self.k)
    }
}

/// Covariance eigen-decomposition of each point's k-neighborhood (the query
/// point counts as its own nearest neighbor). Output normals are unit length
/// and viewpoint-oriented; degenerate neighborhoods yield the placeholder and
/// are listed in the output.
pub fn estimate_pca(frame: &Frame, k: usize) -> Result<EstimateOutput, EstimateError> {
    if k < 3 {
        return Err(EstimateError::NeighborhoodTooSmall { k, min: 3 });
    }
    if frame.len() < k {
        return Err(EstimateError::TooFewPoints {
            required: k,
            actual: frame.len(),
        });
    }

    let tree = KdTree::build(&frame.points);
    let rows: Vec<(Vec3, bool)> = frame
        .points
        .par_iter()
        .map(|p| pca_normal(&tree, &frame.points, p, k))
        .collect();

    let mut degenerate = Vec::new();
    let normals = rows
        .into_iter()
        .enumerate()
        .map(|(i, (n, bad))| {
            if bad {
                degenerate.push(i as u32);
            }
            n
        })
        .collect();

    let field = orient_viewpoint(&NormalField::new(normals, frame.frame_id), frame)?;
    Ok(EstimateOutput { field, degenerate })
}

/// Returns the (un-oriented) normal and a degeneracy flag.
fn pca_normal(tree: &KdTree, points: &[Vec3], query: &Vec3, k: usize) -> (Vec3, bool) {
    let neighbors = tree.nearest(query, k);

    let mut centroid = Vec3::zeros();
    for n in &neighbors {
        centroid += points[n.index as usize];
    }
    centroid /= neighbors.len() as f64;

    let mut cov = Matrix3::zeros();
    for n in &neighbors {
        let d = points[n.index as usize] - centroid;
        cov.m11 += d.x * d.x;
        cov.m12 += d.x * d.y;
        cov.m13 += d.x * d.z;
        cov.m22 += d.y * d.y;
        cov.m23 += d.y * d.z;
        cov.m33 += d.z * d.z;
    }
    cov.m21 = cov.m12;
    cov.m31 = cov.m13;
    cov.m32 = cov.m23;

    let eigen = SymmetricEigen::new(cov);
    let values: [f64; 3] = [
        eigen.eigenvalues[0],
        eigen.eigenvalues[1],
        eigen.eigenvalues[2],
    ];
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).unwrap());
    let [small, mid, large] = order;

    if values[large] <= 0.0 || values[mid] <= COLLINEAR_REL_TOL * values[large] {
        return (PLACEHOLDER_NORMAL, true);
    }

    let v = eigen.eigenvectors.column(small);
    let normal = Vec3::new(v[0], v[1], v[2]);
    let norm = normal.norm();
    if norm <= 1e-12 {
        return (PLACEHOLDER_NORMAL, true);
    }
    (normal / norm, false)
}
