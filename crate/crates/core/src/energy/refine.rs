//! Gradient-descent refinement of normal fields against their initial
//! estimates.
//!
//! The initial fields act as labels for the data term while the smoothness
//! and unit-norm terms pull the field toward spatial, temporal, and spherical
//! consistency. Descent uses backtracking (step halving) so the objective
//! never increases between accepted iterates; the step is interpreted per
//! point (the point-averaged gradient is rescaled by the total point count).
//!
//! Multi-frame sequences average the per-frame terms over frames and the
//! cross-frame term over consecutive pairs; a single frame simply has no
//! cross-frame term.

use rayon::prelude::*;

use crate::frame::{Frame, NormalField};
use crate::geom::{Pose, Vec3};
use crate::graph::{build_knn_graph, build_temporal_graph, temporal_maps, WeightedGraph};

use super::{
    data_grad_into, data_value_slice, eikonal_grad_into, eikonal_value_slice, rotate_field,
    spatial_grad_into, spatial_value_slice, temporal_grad_into, temporal_value_slice, EnergyError,
    RefineConfig, SampleWeights,
};

/// Which regularizers participate; the data term is always on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TermSelection {
    pub spatial: bool,
    pub temporal: bool,
    pub eikonal: bool,
}

impl Default for TermSelection {
    fn default() -> Self {
        Self {
            spatial: true,
            temporal: true,
            eikonal: true,
        }
    }
}

impl TermSelection {
    pub fn data_only() -> Self {
        Self {
            spatial: false,
            temporal: false,
            eikonal: false,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RefineOutcome {
    pub fields: Vec<NormalField>,
    /// Objective value before the first step and after each accepted step;
    /// non-increasing by construction.
    pub objective_trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

/// Full-objective refinement; see [`refine_with_terms`].
pub fn refine_normals(
    frames: &[Frame],
    init_fields: &[NormalField],
    config: &RefineConfig,
) -> Result<RefineOutcome, EnergyError> {
    refine_with_terms(frames, init_fields, config, TermSelection::default())
}

struct Workspace {
    labels: Vec<Vec<Vec3>>,
    weights: Vec<SampleWeights>,
    spatial_graphs: Vec<Option<WeightedGraph>>,
    temporal_graphs: Vec<(WeightedGraph, (Pose, Pose))>,
    gamma: f64,
    delta: f64,
    frame_norm: f64,
    pair_norm: f64,
    terms: TermSelection,
}

impl Workspace {
    fn value(&self, x: &[Vec<Vec3>]) -> f64 {
        let mut total = 0.0;
        for (f, field) in x.iter().enumerate() {
            total += data_value_slice(field, &self.labels[f], self.weights[f].values(), self.delta)
                * self.frame_norm;
            if self.terms.spatial {
                if let Some(graph) = &self.spatial_graphs[f] {
                    total += spatial_value_slice(graph, field, self.delta)
                        * self.gamma
                        * self.frame_norm;
                }
            }
            if self.terms.eikonal {
                total += eikonal_value_slice(field) * self.gamma * self.frame_norm;
            }
        }
        for (p, (graph, maps)) in self.temporal_graphs.iter().enumerate() {
            let rotated_t = rotate_field(&x[p], &maps.0);
            let rotated_t1 = rotate_field(&x[p + 1], &maps.1);
            total += temporal_value_slice(graph, &rotated_t, &rotated_t1, self.delta)
                * self.gamma
                * self.pair_norm;
        }
        total
    }

    fn gradient(&self, x: &[Vec<Vec3>], grads: &mut [Vec<Vec3>]) {
        for g in grads.iter_mut() {
            g.par_iter_mut().for_each(|v| *v = Vec3::zeros());
        }
        for (f, field) in x.iter().enumerate() {
            data_grad_into(
                field,
                &self.labels[f],
                self.weights[f].values(),
                self.delta,
                self.frame_norm,
                &mut grads[f],
            );
            if self.terms.spatial {
                if let Some(graph) = &self.spatial_graphs[f] {
                    spatial_grad_into(
                        graph,
                        field,
                        self.delta,
                        self.gamma * self.frame_norm,
                        &mut grads[f],
                    );
                }
            }
            if self.terms.eikonal {
                eikonal_grad_into(field, self.gamma * self.frame_norm, &mut grads[f]);
            }
        }
        for (p, (graph, maps)) in self.temporal_graphs.iter().enumerate() {
            let rotated_t = rotate_field(&x[p], &maps.0);
            let rotated_t1 = rotate_field(&x[p + 1], &maps.1);
            let (head, tail) = grads.split_at_mut(p + 1);
            temporal_grad_into(
                graph,
                &rotated_t,
                &rotated_t1,
                (&maps.0, &maps.1),
                self.delta,
                self.gamma * self.pair_norm,
                &mut head[p],
                &mut tail[0],
            );
        }
    }
}

/// Refines `init_fields` (used both as the starting point and as the data
/// term's labels) by descending the selected objective terms.
pub fn refine_with_terms(
    frames: &[Frame],
    init_fields: &[NormalField],
    config: &RefineConfig,
    terms: TermSelection,
) -> Result<RefineOutcome, EnergyError> {
    config.validate()?;
    if frames.len() != init_fields.len() {
        return Err(EnergyError::LengthMismatch {
            left: frames.len(),
            right: init_fields.len(),
        });
    }
    if frames.is_empty() {
        return Err(EnergyError::EmptyInput);
    }
    for (frame, field) in frames.iter().zip(init_fields) {
        if frame.len() != field.len() {
            return Err(EnergyError::GraphMismatch {
                graph: frame.len(),
                field: field.len(),
            });
        }
        if frame.is_empty() {
            return Err(EnergyError::EmptyInput);
        }
    }

    let n_frames = frames.len();
    let spatial_graphs: Vec<Option<WeightedGraph>> = if terms.spatial {
        frames
            .iter()
            .map(|f| {
                (f.len() >= 2)
                    .then(|| build_knn_graph(&f.points, config.graph_k, config.graph_sigma))
                    .transpose()
                    .map_err(|e| EnergyError::InvalidConfig(e.to_string()))
            })
            .collect::<Result<_, _>>()?
    } else {
        vec![None; n_frames]
    };

    let identity = Pose::identity();
    let temporal_graphs: Vec<(WeightedGraph, (Pose, Pose))> = if terms.temporal && n_frames >= 2 {
        frames
            .windows(2)
            .map(|pair| {
                let graph = build_temporal_graph(
                    &pair[0],
                    &pair[1],
                    &identity,
                    &identity,
                    config.graph_k,
                    config.graph_sigma,
                )
                .map_err(|e| EnergyError::InvalidConfig(e.to_string()))?;
                let maps = temporal_maps(&pair[0], &pair[1], &identity, &identity);
                Ok::<_, EnergyError>((graph, maps))
            })
            .collect::<Result<_, _>>()?
    } else {
        Vec::new()
    };
    let n_pairs = temporal_graphs.len();

    let workspace = Workspace {
        labels: init_fields.iter().map(|f| f.normals.clone()).collect(),
        weights: frames
            .iter()
            .map(|f| SampleWeights::uniform(f.len()))
            .collect(),
        spatial_graphs,
        temporal_graphs,
        gamma: config.gamma,
        delta: config.huber_delta,
        frame_norm: 1.0 / n_frames as f64,
        pair_norm: if n_pairs > 0 {
            1.0 / n_pairs as f64
        } else {
            0.0
        },
        terms,
    };

    let mut x: Vec<Vec<Vec3>> = init_fields.iter().map(|f| f.normals.clone()).collect();
    // Projected descent starts on the sphere; labels stay the raw init.
    if config.renormalize_each_iter {
        for field in &mut x {
            field.par_iter_mut().for_each(|v| {
                let norm = v.norm();
                if norm > 1e-12 {
                    *v /= norm;
                }
            });
        }
    }
    let total_points: usize = frames.iter().map(|f| f.len()).sum();
    let grad_scale = total_points as f64;

    let mut energy = workspace.value(&x);
    if !energy.is_finite() {
        return Err(EnergyError::NonFiniteEnergy);
    }
    let mut trace = vec![energy];
    let finish = |x: Vec<Vec<Vec3>>, trace: Vec<f64>, converged: bool| {
        let fields = x
            .into_iter()
            .zip(frames)
            .map(|(normals, frame)| NormalField::new(normals, frame.frame_id))
            .collect();
        let iterations = trace.len() - 1;
        Ok(RefineOutcome {
            fields,
            objective_trace: trace,
            iterations,
            converged,
        })
    };
    if energy == 0.0 {
        return finish(x, trace, true);
    }

    let mut grads: Vec<Vec<Vec3>> = frames
        .iter()
        .map(|f| vec![Vec3::zeros(); f.len()])
        .collect();
    let mut trial: Vec<Vec<Vec3>> = x.clone();
    let mut step = config.step_size;
    let min_step = config.step_size * 2.0f64.powi(-60);
    let mut converged = false;

    for _ in 0..config.max_iters {
        workspace.gradient(&x, &mut grads);
        let grad_norm_sq: f64 = grads
            .iter()
            .map(|g| g.iter().map(|v| v.norm_squared()).sum::<f64>())
            .sum();
        if grad_norm_sq == 0.0 {
            converged = true;
            break;
        }

        let mut accepted = false;
        while step >= min_step {
            let factor = step * grad_scale;
            for f in 0..n_frames {
                let (xs, gs, ts) = (&x[f], &grads[f], &mut trial[f]);
                ts.par_iter_mut().enumerate().for_each(|(i, t)| {
                    let mut v = xs[i] - gs[i] * factor;
                    if config.renormalize_each_iter {
                        let norm = v.norm();
                        if norm > 1e-12 {
                            v /= norm;
                        }
                    }
                    *t = v;
                });
            }
            let trial_energy = workspace.value(&trial);
            if trial_energy.is_finite() && trial_energy < energy {
                std::mem::swap(&mut x, &mut trial);
                let previous = energy;
                energy = trial_energy;
                trace.push(energy);
                accepted = true;
                step = (step * 2.0).min(config.step_size);
                let decrease = previous - energy;
                if decrease <= config.convergence_tol * previous.abs().max(1e-30) {
                    converged = true;
                }
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            converged = true;
            break;
        }
        if converged {
            break;
        }
    }

    finish(x, trace, converged)
}
