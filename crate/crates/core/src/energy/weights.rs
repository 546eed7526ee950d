//! Per-point sample weights for the data term, including inverse-frequency
//! weighting of label directions binned on a subdivided icosahedron.

use std::collections::BTreeMap;

use crate::frame::NormalField;
use crate::geom::Vec3;

use super::EnergyError;

/// Nonnegative, finite per-point weights for the data term.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleWeights(Vec<f64>);

impl SampleWeights {
    pub fn new(values: Vec<f64>) -> Result<Self, EnergyError> {
        if values.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(EnergyError::InvalidConfig(
                "sample weights must be finite and >= 0".into(),
            ));
        }
        Ok(Self(values))
    }

    pub fn uniform(n: usize) -> Self {
        Self(vec![1.0; n])
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn mean(&self) -> f64 {
        if self.0.is_empty() {
            return 0.0;
        }
        self.0.iter().sum::<f64>() / self.0.len() as f64
    }
}

/// Vertex counts of icosahedron subdivisions; the supported bin counts.
pub fn valid_bin_counts() -> &'static [usize] {
    &[12, 42, 162, 642, 2562]
}

/// Unit directions of the subdivided icosahedron with `bin_count` vertices.
pub fn icosphere_directions(bin_count: usize) -> Result<Vec<Vec3>, EnergyError> {
    let level = match bin_count {
        12 => 0,
        42 => 1,
        162 => 2,
        642 => 3,
        2562 => 4,
        _ => {
            return Err(EnergyError::InvalidBinCount {
                requested: bin_count,
                valid: valid_bin_counts(),
            })
        }
    };

    // Golden-ratio icosahedron.
    let phi = (1.0 + 5.0f64.sqrt()) / 2.0;
    let mut verts: Vec<Vec3> = [
        (-1.0, phi, 0.0),
        (1.0, phi, 0.0),
        (-1.0, -phi, 0.0),
        (1.0, -phi, 0.0),
        (0.0, -1.0, phi),
        (0.0, 1.0, phi),
        (0.0, -1.0, -phi),
        (0.0, 1.0, -phi),
        (phi, 0.0, -1.0),
        (phi, 0.0, 1.0),
        (-phi, 0.0, -1.0),
        (-phi, 0.0, 1.0),
    ]
    .iter()
    .map(|&(x, y, z)| Vec3::new(x, y, z).normalize())
    .collect();

    let mut faces: Vec<[usize; 3]> = vec![
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];

    for _ in 0..level {
        let mut midpoints: BTreeMap<(usize, usize), usize> = BTreeMap::new();
        let mut next_faces = Vec::with_capacity(faces.len() * 4);
        for face in &faces {
            let mut mid = [0usize; 3];
            for (slot, (a, b)) in [(face[0], face[1]), (face[1], face[2]), (face[2], face[0])]
                .into_iter()
                .enumerate()
            {
                let key = (a.min(b), a.max(b));
                mid[slot] = *midpoints.entry(key).or_insert_with(|| {
                    verts.push((verts[a] + verts[b]).normalize());
                    verts.len() - 1
                });
            }
            next_faces.push([face[0], mid[0], mid[2]]);
            next_faces.push([face[1], mid[1], mid[0]]);
            next_faces.push([face[2], mid[2], mid[1]]);
            next_faces.push([mid[0], mid[1], mid[2]]);
        }
        faces = next_faces;
    }

    debug_assert_eq!(verts.len(), bin_count);
    Ok(verts)
}

/// Nearest bin center (max dot product) for each direction; ties resolve to
/// the lower bin index.
fn assign_bins(labels: &[Vec3], centers: &[Vec3]) -> Result<Vec<usize>, EnergyError> {
    labels
        .iter()
        .enumerate()
        .map(|(i, raw)| {
            let norm = raw.norm();
            if norm <= 1e-12 {
                return Err(EnergyError::DegenerateLabel { index: i });
            }
            let dir = raw / norm;
            let mut best = 0usize;
            let mut best_dot = f64::NEG_INFINITY;
            for (b, c) in centers.iter().enumerate() {
                let d = dir.dot(c);
                if d > best_dot {
                    best_dot = d;
                    best = b;
                }
            }
            Ok(best)
        })
        .collect()
}

/// Weights each label inversely to the population of its direction bin:
/// occupied bins get `total / count`, rescaled so the occupied-bin weights
/// average to 1, and every point inherits its bin's weight. With a single
/// occupied bin all weights are exactly 1.
pub fn inverse_frequency_weights(
    labels: &NormalField,
    bin_count: usize,
) -> Result<SampleWeights, EnergyError> {
    if labels.is_empty() {
        return Err(EnergyError::EmptyInput);
    }
    let centers = icosphere_directions(bin_count)?;
    let bins = assign_bins(&labels.normals, &centers)?;

    let mut counts = vec![0usize; centers.len()];
    for &b in &bins {
        counts[b] += 1;
    }

    let total = labels.len() as f64;
    let mut bin_weight = vec![0.0f64; centers.len()];
    let mut occupied = 0usize;
    let mut weight_sum = 0.0;
    for (b, &c) in counts.iter().enumerate() {
        if c > 0 {
            bin_weight[b] = total / c as f64;
            weight_sum += bin_weight[b];
            occupied += 1;
        }
    }
    let scale = occupied as f64 / weight_sum;

    let values = bins.iter().map(|&b| bin_weight[b] * scale).collect();
    SampleWeights::new(values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn icosphere_counts_and_unit_length() {
        for &count in valid_bin_counts() {
            let dirs = icosphere_directions(count).unwrap();
            assert_eq!(dirs.len(), count);
            for d in &dirs {
                assert_relative_eq!(d.norm(), 1.0, epsilon = 1e-12);
            }
        }
        assert!(matches!(
            icosphere_directions(100),
            Err(EnergyError::InvalidBinCount { requested: 100, .. })
        ));
    }

    #[test]
    fn identical_labels_weigh_one() {
        let field = NormalField::new(vec![Vec3::new(0.0, 0.0, 1.0); 7], 0);
        let w = inverse_frequency_weights(&field, 12).unwrap();
        for &v in w.values() {
            assert_relative_eq!(v, 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn three_to_one_bins_weigh_half_and_three_halves() {
        let centers = icosphere_directions(12).unwrap();
        let field = NormalField::new(vec![centers[0], centers[0], centers[0], centers[5]], 0);
        let w = inverse_frequency_weights(&field, 12).unwrap();
        assert_relative_eq!(w.values()[0], 0.5, epsilon = 1e-12);
        assert_relative_eq!(w.values()[1], 0.5, epsilon = 1e-12);
        assert_relative_eq!(w.values()[2], 0.5, epsilon = 1e-12);
        assert_relative_eq!(w.values()[3], 1.5, epsilon = 1e-12);
        assert_relative_eq!(w.values()[3] / w.values()[0], 3.0, epsilon = 1e-12);
    }

    #[test]
    fn uniform_directions_stay_in_sanity_band() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let normals: Vec<Vec3> = (0..20_000)
            .map(|_| {
                // Uniform on the sphere via normalized Gaussian triples.
                loop {
                    let v = Vec3::new(
                        rng.random::<f64>() * 2.0 - 1.0,
                        rng.random::<f64>() * 2.0 - 1.0,
                        rng.random::<f64>() * 2.0 - 1.0,
                    );
                    let n = v.norm();
                    if n > 1e-3 && n <= 1.0 {
                        break v / n;
                    }
                }
            })
            .collect();
        let field = NormalField::new(normals, 0);
        let w = inverse_frequency_weights(&field, 42).unwrap();
        for &v in w.values() {
            assert!((0.5..=2.0).contains(&v), "weight {v} outside sanity band");
        }
    }

    #[test]
    fn rejects_empty_and_degenerate_labels() {
        let empty = NormalField::new(vec![], 0);
        assert!(matches!(
            inverse_frequency_weights(&empty, 12),
            Err(EnergyError::EmptyInput)
        ));
        let zero = NormalField::new(vec![Vec3::zeros()], 0);
        assert!(matches!(
            inverse_frequency_weights(&zero, 12),
            Err(EnergyError::DegenerateLabel { index: 0 })
        ));
    }

    #[test]
    fn weights_reject_negative_values() {
        assert!(SampleWeights::new(vec![1.0, -0.5]).is_err());
        assert!(SampleWeights::new(vec![1.0, f64::NAN]).is_err());
        let w = SampleWeights::uniform(4);
        assert_relative_eq!(w.mean(), 1.0);
    }
}
