//! Osculating-jet fitting: a bivariate polynomial height function over the
//! PCA tangent frame, solved by least squares; the normal comes from the
//! fitted surface gradient at the query point.

use nalgebra::{DMatrix, DVector, Matrix3, SymmetricEigen};
use rayon::prelude::*;

use crate::frame::{Frame, NormalField};
use crate::geom::Vec3;
use crate::spatial::KdTree;

use super::{orient_viewpoint, EstimateError, EstimateOutput, NormalEstimator, PLACEHOLDER_NORMAL};

pub struct JetEstimator {
    pub k: usize,
    pub degree: usize,
}

impl NormalEstimator for JetEstimator {
    fn name(&self) -> &'static str {
        "jet"
    }

    fn estimate(&self, frame: &Frame) -> Result<EstimateOutput, EstimateError> {
        estimate_jet(frame, self.k, self.degree)
    }
}

/// Number of bivariate monomials up to `degree` (constant term included).
fn monomial_count(degree: usize) -> usize {
    (degree + 1) * (degree + 2) / 2
}

/// Least-squares jet fit per point. Requires `k >= monomial_count(degree)`
/// (6 for the default degree 2). Rank-deficient normal equations fall back to
/// the placeholder normal and are reported, matching the PCA policy.
pub fn estimate_jet(
    frame: &Frame,
    k: usize,
    degree: usize,
) -> Result<EstimateOutput, EstimateError> {
    if !(1..=4).contains(&degree) {
        return Err(EstimateError::UnsupportedDegree { degree });
    }
    let min_k = monomial_count(degree);
    if k < min_k {
        return Err(EstimateError::NeighborhoodTooSmall { k, min: min_k });
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
        .map(|p| jet_normal(&tree, &frame.points, p, k, degree))
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

fn jet_normal(
    tree: &KdTree,
    points: &[Vec3],
    query: &Vec3,
    k: usize,
    degree: usize,
) -> (Vec3, bool) {
    let neighbors = tree.nearest(query, k);

    // Tangent frame from the neighborhood covariance.
    let mut centroid = Vec3::zeros();
    for n in &neighbors {
        centroid += points[n.index as usize];
    }
    centroid /= neighbors.len() as f64;
    let mut cov = Matrix3::zeros();
    for n in &neighbors {
        let d = points[n.index as usize] - centroid;
        cov += d * d.transpose();
    }
    let eigen = SymmetricEigen::new(cov);
    let values: [f64; 3] = [
        eigen.eigenvalues[0],
        eigen.eigenvalues[1],
        eigen.eigenvalues[2],
    ];
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).unwrap());
    let [small, mid, large] = order;
    if values[large] <= 0.0 || values[mid] <= 1e-10 * values[large] {
        return (PLACEHOLDER_NORMAL, true);
    }
    let basis_u = eigen.eigenvectors.column(large).into_owned();
    let basis_v = eigen.eigenvectors.column(mid).into_owned();
    let basis_w = eigen.eigenvectors.column(small).into_owned();

    // Height-function least squares in local coordinates about the query.
    let cols = monomial_count(degree);
    let mut design = DMatrix::zeros(neighbors.len(), cols);
    let mut height = DVector::zeros(neighbors.len());
    for (row, n) in neighbors.iter().enumerate() {
        let d = points[n.index as usize] - query;
        let u = basis_u.dot(&d);
        let v = basis_v.dot(&d);
        height[row] = basis_w.dot(&d);
        let mut col = 0;
        for total in 0..=degree {
            for ui in (0..=total).rev() {
                let vi = total - ui;
                design[(row, col)] = u.powi(ui as i32) * v.powi(vi as i32);
                col += 1;
            }
        }
    }

    let gram = design.transpose() * &design;
    let rhs = design.transpose() * height;
    let Some(chol) = gram.clone().cholesky() else {
        return (PLACEHOLDER_NORMAL, true);
    };
    // Guard against numerically singular systems Cholesky still accepts.
    let diag = chol.l_dirty();
    let mut dmin = f64::INFINITY;
    let mut dmax: f64 = 0.0;
    for i in 0..cols {
        let d = diag[(i, i)].abs();
        dmin = dmin.min(d);
        dmax = dmax.max(d);
    }
    if dmin <= 1e-10 * dmax {
        return (PLACEHOLDER_NORMAL, true);
    }
    let coeffs = chol.solve(&rhs);

    // Monomial layout per degree block is [.., u, v, ..]: gradient at the
    // query (local origin) only sees the linear coefficients.
    let du = coeffs[1];
    let dv = coeffs[2];
    let normal = basis_w - basis_u * du - basis_v * dv;
    let norm = normal.norm();
    if norm <= 1e-12 || !norm.is_finite() {
        return (PLACEHOLDER_NORMAL, true);
    }
    (Vec3::new(normal[0], normal[1], normal[2]) / norm, false)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::Pose;

    fn frame_of(points: Vec<Vec3>) -> Frame {
        Frame {
            points,
            gt_normals: None,
            pose: Pose::identity(),
            timestamp: 0.0,
            frame_id: 0,
        }
    }

    #[test]
    fn plane_is_reproduced_exactly() {
        let mut pts = Vec::new();
        for i in 0..15 {
            for j in 0..15 {
                pts.push(Vec3::new(i as f64 * 0.1, j as f64 * 0.1, -2.0));
            }
        }
        let frame = frame_of(pts);
        let out = estimate_jet(&frame, 12, 2).unwrap();
        assert!(out.degenerate.is_empty());
        for n in &out.field.normals {
            assert!((n - Vec3::new(0.0, 0.0, 1.0)).norm() < 1e-9);
        }
    }

    #[test]
    fn cylinder_normals_near_radial() {
        // Patch of a radius-2 cylinder (axis z, centered at x = 5) facing the
        // sensor at the origin; the outward radial direction points back
        // toward the sensor, so orientation keeps it.
        let radius = 2.0;
        let mut pts = Vec::new();
        for i in -20..=20 {
            for j in -10..=10 {
                let theta = i as f64 * 0.01; // ~0.6 deg steps around the near side
                let z = j as f64 * 0.02 - 1.0;
                pts.push(Vec3::new(
                    5.0 - radius * theta.cos(),
                    radius * theta.sin(),
                    z,
                ));
            }
        }
        let frame = frame_of(pts);
        let out = estimate_jet(&frame, 16, 2).unwrap();
        for (p, n) in frame.points.iter().zip(&out.field.normals) {
            let radial = (Vec3::new(5.0, 0.0, p.z) - p).normalize(); // toward axis
            let outward = -radial; // toward the sensor side
            let angle = n.dot(&outward).clamp(-1.0, 1.0).acos().to_degrees();
            assert!(angle < 1.0, "angle {angle} at {p:?}");
        }
    }

    #[test]
    fn degree_and_k_preconditions() {
        let frame = frame_of(vec![Vec3::zeros(); 10]);
        assert!(matches!(
            estimate_jet(&frame, 5, 2),
            Err(EstimateError::NeighborhoodTooSmall { k: 5, min: 6 })
        ));
        assert!(matches!(
            estimate_jet(&frame, 6, 0),
            Err(EstimateError::UnsupportedDegree { .. })
        ));
        assert!(matches!(
            estimate_jet(&frame, 12, 2),
            Err(EstimateError::TooFewPoints { .. })
        ));
    }

    #[test]
    fn noisy_plane_normals_stay_finite_and_unit() {
        use rand::prelude::*;
        use rand_chacha::ChaCha8Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let mut pts = Vec::new();
        for i in 0..25 {
            for j in 0..25 {
                let dz = 0.02 * (rng.random::<f64>() - 0.5);
                pts.push(Vec3::new(i as f64 * 0.05, j as f64 * 0.05, -2.0 + dz));
            }
        }
        let frame = frame_of(pts);
        let out = estimate_jet(&frame, 32, 2).unwrap();
        assert!(out.field.all_unit(1e-6));
        assert!(out
            .field
            .normals
            .iter()
            .all(|n| n.iter().all(|c| c.is_finite())));
    }

    #[test]
    fn degenerate_line_falls_back_to_placeholder() {
        let pts: Vec<Vec3> = (0..12).map(|i| Vec3::new(i as f64, 0.0, -1.0)).collect();
        let frame = frame_of(pts);
        let out = estimate_jet(&frame, 6, 2).unwrap();
        assert_eq!(out.degenerate.len(), frame.len());
    }
}
