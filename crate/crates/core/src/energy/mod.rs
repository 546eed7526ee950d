//! The refinement objective over normal fields and its analytic gradients.
//!
//! Four terms combine into the total objective
//!
//! ```text
//! E = E_data + gamma * (E_spatial + E_temporal + E_eikonal)
//! ```
//!
//! * `E_data`: per-point weighted L1 distance to the label field, averaged
//!   over points.
//! * `E_spatial`: edge-weighted L1 differences of the field over a
//!   k-neighborhood graph, averaged over directed edges.
//! * `E_temporal`: the same penalty over a bipartite cross-frame graph, with
//!   both fields first rotated into the shared frame by the per-frame maps.
//! * `E_eikonal`: squared deviation of each vector's norm from 1, averaged
//!   over points.
//!
//! All L1 terms use a Huber smoothing with width `huber_delta` so that every
//! term is differentiable everywhere; outside the smoothing zone the value is
//! `|x| - delta/2`, so hand-computed L1 oracles shift by `delta/2` per
//! saturated component.
//!
//! Parallel evaluation is deterministic for any thread count: values reduce
//! over fixed-size chunks in index order and gradients gather per node over
//! the graph's CSR adjacency.

mod refine;
mod weights;

pub use refine::{refine_normals, refine_with_terms, RefineOutcome, TermSelection};
pub use weights::{
    icosphere_directions, inverse_frequency_weights, valid_bin_counts, SampleWeights,
};

use rayon::prelude::*;
use serde::Deserialize;
use thiserror::Error;

use crate::frame::NormalField;
use crate::geom::{Pose, Vec3};
use crate::graph::{GraphNodes, WeightedGraph};

/// Chunk length for order-stable parallel reductions.
const PAR_CHUNK: usize = 4096;

#[derive(Debug, Error, PartialEq)]
pub enum EnergyError {
    #[error("field length {left} does not match {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("graph covers {graph} nodes but the field has {field}")]
    GraphMismatch { graph: usize, field: usize },
    #[error("expected a {expected} graph")]
    WrongGraphKind { expected: &'static str },
    #[error("huber_delta must be > 0, got {0}")]
    InvalidDelta(f64),
    #[error("invalid refinement config: {0}")]
    InvalidConfig(String),
    #[error("objective became non-finite (bad config or input)")]
    NonFiniteEnergy,
    #[error("input is empty")]
    EmptyInput,
    #[error("label {index} has near-zero norm and cannot be binned")]
    DegenerateLabel { index: usize },
    #[error("bin_count {requested} is not a subdivided icosahedron size {valid:?}")]
    InvalidBinCount {
        requested: usize,
        valid: &'static [usize],
    },
}

/// Value and per-point gradient of one objective term.
///
/// For the cross-frame term the gradient concatenates both frames: first all
/// points of frame `t`, then all points of frame `t+1`.
#[derive(Debug, Clone, PartialEq)]
pub struct EnergyReport {
    pub value: f64,
    pub gradient: Vec<Vec3>,
}

fn default_gamma() -> f64 {
    0.1
}
fn default_max_iters() -> usize {
    100
}
fn default_step_size() -> f64 {
    0.1
}
fn default_huber_delta() -> f64 {
    1e-3
}
fn default_convergence_tol() -> f64 {
    1e-6
}
fn default_graph_k() -> usize {
    crate::graph::DEFAULT_K
}
fn default_graph_sigma() -> f64 {
    crate::graph::DEFAULT_SIGMA
}

/// Refinement settings. Defaults: `gamma = 0.1`, neighborhood `k = 8`,
/// weight decay `sigma = 0.1` m, Huber width `1e-3`.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RefineConfig {
    /// Trade-off between the data term and the three regularizers.
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    #[serde(default = "default_max_iters")]
    pub max_iters: usize,
    /// Descent step per point; the optimizer halves it until the objective
    /// decreases.
    #[serde(default = "default_step_size")]
    pub step_size: f64,
    #[serde(default = "default_huber_delta")]
    pub huber_delta: f64,
    /// Stop once the relative objective decrease falls below this.
    #[serde(default = "default_convergence_tol")]
    pub convergence_tol: f64,
    /// Project onto the unit sphere after every accepted step. Off by
    /// default so the norm penalty does the work.
    #[serde(default)]
    pub renormalize_each_iter: bool,
    /// Neighborhood size for the graphs built during refinement.
    #[serde(default = "default_graph_k")]
    pub graph_k: usize,
    /// Edge-weight decay scale (meters) for those graphs.
    #[serde(default = "default_graph_sigma")]
    pub graph_sigma: f64,
}

impl Default for RefineConfig {
    fn default() -> Self {
        Self {
            gamma: default_gamma(),
            max_iters: default_max_iters(),
            step_size: default_step_size(),
            huber_delta: default_huber_delta(),
            convergence_tol: default_convergence_tol(),
            renormalize_each_iter: false,
            graph_k: default_graph_k(),
            graph_sigma: default_graph_sigma(),
        }
    }
}

impl RefineConfig {
    pub fn validate(&self) -> Result<(), EnergyError> {
        if self.gamma < 0.0 || !self.gamma.is_finite() {
            return Err(EnergyError::InvalidConfig("gamma must be >= 0".into()));
        }
        if !self.huber_delta.is_finite() || self.huber_delta <= 0.0 {
            return Err(EnergyError::InvalidDelta(self.huber_delta));
        }
        if !self.step_size.is_finite() || self.step_size <= 0.0 {
            return Err(EnergyError::InvalidConfig("step_size must be > 0".into()));
        }
        if !self.convergence_tol.is_finite() || self.convergence_tol < 0.0 {
            return Err(EnergyError::InvalidConfig(
                "convergence_tol must be >= 0".into(),
            ));
        }
        if self.graph_k < 1 {
            return Err(EnergyError::InvalidConfig("graph_k must be >= 1".into()));
        }
        if !self.graph_sigma.is_finite() || self.graph_sigma <= 0.0 {
            return Err(EnergyError::InvalidConfig("graph_sigma must be > 0".into()));
        }
        Ok(())
    }
}

/// Huber-smoothed absolute value: quadratic inside `[-delta, delta]`, then
/// `|x| - delta/2`. C1 everywhere.
#[inline]
pub fn huber(x: f64, delta: f64) -> f64 {
    let a = x.abs();
    if a <= delta {
        x * x / (2.0 * delta)
    } else {
        a - 0.5 * delta
    }
}

#[inline]
pub fn huber_deriv(x: f64, delta: f64) -> f64 {
    if x.abs() <= delta {
        x / delta
    } else {
        x.signum()
    }
}

#[inline]
fn huber_vec(d: &Vec3, delta: f64) -> f64 {
    huber(d.x, delta) + huber(d.y, delta) + huber(d.z, delta)
}

#[inline]
fn huber_deriv_vec(d: &Vec3, delta: f64) -> Vec3 {
    Vec3::new(
        huber_deriv(d.x, delta),
        huber_deriv(d.y, delta),
        huber_deriv(d.z, delta),
    )
}

/// Order-stable parallel sum: fixed chunks, chunk sums combined in order.
fn chunked_sum<T: Sync>(items: &[T], f: impl Fn(&T) -> f64 + Sync) -> f64 {
    if items.len() <= PAR_CHUNK {
        return items.iter().map(&f).sum();
    }
    items
        .par_chunks(PAR_CHUNK)
        .map(|chunk| chunk.iter().map(&f).sum::<f64>())
        .collect::<Vec<f64>>()
        .into_iter()
        .sum()
}

/// Same, indexed over `0..n` without materializing the indices.
fn chunked_index_sum(n: usize, f: impl Fn(usize) -> f64 + Sync) -> f64 {
    if n <= PAR_CHUNK {
        return (0..n).map(&f).sum();
    }
    let chunks = n.div_ceil(PAR_CHUNK);
    (0..chunks)
        .into_par_iter()
        .map(|c| {
            let lo = c * PAR_CHUNK;
            let hi = ((c + 1) * PAR_CHUNK).min(n);
            (lo..hi).map(&f).sum::<f64>()
        })
        .collect::<Vec<f64>>()
        .into_iter()
        .sum()
}

// ---------------------------------------------------------------------------
// Data term
// ---------------------------------------------------------------------------

pub(crate) fn data_value_slice(
    field: &[Vec3],
    labels: &[Vec3],
    weights: &[f64],
    delta: f64,
) -> f64 {
    if field.is_empty() {
        return 0.0;
    }
    chunked_index_sum(field.len(), |i| {
        weights[i] * huber_vec(&(field[i] - labels[i]), delta)
    }) / field.len() as f64
}

/// Adds `scale * d(data)/d(field)` into `out`.
pub(crate) fn data_grad_into(
    field: &[Vec3],
    labels: &[Vec3],
    weights: &[f64],
    delta: f64,
    scale: f64,
    out: &mut [Vec3],
) {
    if field.is_empty() {
        return;
    }
    let coeff = scale / field.len() as f64;
    out.par_iter_mut().enumerate().for_each(|(i, g)| {
        *g += huber_deriv_vec(&(field[i] - labels[i]), delta) * (weights[i] * coeff);
    });
}

fn validate_data_inputs(
    field: &NormalField,
    labels: &NormalField,
    weights: &SampleWeights,
    huber_delta: f64,
) -> Result<(), EnergyError> {
    if field.len() != labels.len() {
        return Err(EnergyError::LengthMismatch {
            left: field.len(),
            right: labels.len(),
        });
    }
    if weights.len() != field.len() {
        return Err(EnergyError::LengthMismatch {
            left: weights.len(),
            right: field.len(),
        });
    }
    if !huber_delta.is_finite() || huber_delta <= 0.0 {
        return Err(EnergyError::InvalidDelta(huber_delta));
    }
    Ok(())
}

/// Weighted, Huber-smoothed L1 distance between a field and its labels,
/// averaged over points; the gradient is taken with respect to `field`.
pub fn l1_data_energy(
    field: &NormalField,
    labels: &NormalField,
    weights: &SampleWeights,
    huber_delta: f64,
) -> Result<EnergyReport, EnergyError> {
    validate_data_inputs(field, labels, weights, huber_delta)?;
    let value = data_value_slice(
        &field.normals,
        &labels.normals,
        weights.values(),
        huber_delta,
    );
    let mut gradient = vec![Vec3::zeros(); field.len()];
    data_grad_into(
        &field.normals,
        &labels.normals,
        weights.values(),
        huber_delta,
        1.0,
        &mut gradient,
    );
    Ok(EnergyReport { value, gradient })
}

/// Value-only fast path of [`l1_data_energy`] (what a line search calls).
pub fn l1_data_value(
    field: &NormalField,
    labels: &NormalField,
    weights: &SampleWeights,
    huber_delta: f64,
) -> Result<f64, EnergyError> {
    validate_data_inputs(field, labels, weights, huber_delta)?;
    Ok(data_value_slice(
        &field.normals,
        &labels.normals,
        weights.values(),
        huber_delta,
    ))
}

// ---------------------------------------------------------------------------
// Spatial smoothness term
// ---------------------------------------------------------------------------

pub(crate) fn spatial_value_slice(graph: &WeightedGraph, field: &[Vec3], delta: f64) -> f64 {
    if graph.edge_count() == 0 {
        return 0.0;
    }
    chunked_sum(graph.edges(), |e| {
        e.weight
            * huber_vec(
                &(field[e.source as usize] - field[e.target as usize]),
                delta,
            )
    }) / graph.edge_count() as f64
}

/// Adds `scale * d(spatial)/d(field)` into `out`, gathering per node over the
/// graph adjacency so results do not depend on the thread count.
pub(crate) fn spatial_grad_into(
    graph: &WeightedGraph,
    field: &[Vec3],
    delta: f64,
    scale: f64,
    out: &mut [Vec3],
) {
    let m = graph.edge_count();
    if m == 0 {
        return;
    }
    let mut edge_grad = vec![Vec3::zeros(); m];
    graph
        .edges()
        .par_iter()
        .zip(edge_grad.par_iter_mut())
        .for_each(|(e, g)| {
            let diff = field[e.source as usize] - field[e.target as usize];
            *g = huber_deriv_vec(&diff, delta) * e.weight;
        });

    let coeff = scale / m as f64;
    out.par_iter_mut().enumerate().for_each(|(node, g)| {
        let mut acc = Vec3::zeros();
        for idx in graph.outgoing_range(node) {
            acc += edge_grad[idx];
        }
        for &edge_idx in graph.incoming(node) {
            acc -= edge_grad[edge_idx as usize];
        }
        *g += acc * coeff;
    });
}

fn validate_spatial_inputs(
    field: &NormalField,
    graph: &WeightedGraph,
    huber_delta: f64,
) -> Result<(), EnergyError> {
    let GraphNodes::Unipartite(n) = graph.nodes() else {
        return Err(EnergyError::WrongGraphKind {
            expected: "unipartite",
        });
    };
    if n != field.len() {
        return Err(EnergyError::GraphMismatch {
            graph: n,
            field: field.len(),
        });
    }
    if !huber_delta.is_finite() || huber_delta <= 0.0 {
        return Err(EnergyError::InvalidDelta(huber_delta));
    }
    Ok(())
}

/// Edge-weighted, Huber-smoothed L1 variation of the field over the graph,
/// averaged over directed edges. The gradient accumulates at both endpoints.
pub fn sgtv_energy(
    field: &NormalField,
    graph: &WeightedGraph,
    huber_delta: f64,
) -> Result<EnergyReport, EnergyError> {
    validate_spatial_inputs(field, graph, huber_delta)?;
    let value = spatial_value_slice(graph, &field.normals, huber_delta);
    let mut gradient = vec![Vec3::zeros(); field.len()];
    spatial_grad_into(graph, &field.normals, huber_delta, 1.0, &mut gradient);
    Ok(EnergyReport { value, gradient })
}

/// Value-only fast path of [`sgtv_energy`].
pub fn sgtv_value(
    field: &NormalField,
    graph: &WeightedGraph,
    huber_delta: f64,
) -> Result<f64, EnergyError> {
    validate_spatial_inputs(field, graph, huber_delta)?;
    Ok(spatial_value_slice(graph, &field.normals, huber_delta))
}

// ---------------------------------------------------------------------------
// Temporal smoothness term
// ---------------------------------------------------------------------------

pub(crate) fn temporal_value_slice(
    graph: &WeightedGraph,
    rotated_t: &[Vec3],
    rotated_t1: &[Vec3],
    delta: f64,
) -> f64 {
    if graph.edge_count() == 0 {
        return 0.0;
    }
    chunked_sum(graph.edges(), |e| {
        e.weight
            * huber_vec(
                &(rotated_t[e.source as usize] - rotated_t1[e.target as usize]),
                delta,
            )
    }) / graph.edge_count() as f64
}

pub(crate) fn rotate_field(field: &[Vec3], map: &Pose) -> Vec<Vec3> {
    let rot = *map.rotation();
    field.par_iter().map(|n| rot * n).collect()
}

/// Adds the cross-frame gradients (back-rotated into each frame's own
/// coordinates) into `out_t` / `out_t1`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn temporal_grad_into(
    graph: &WeightedGraph,
    rotated_t: &[Vec3],
    rotated_t1: &[Vec3],
    maps: (&Pose, &Pose),
    delta: f64,
    scale: f64,
    out_t: &mut [Vec3],
    out_t1: &mut [Vec3],
) {
    let m = graph.edge_count();
    if m == 0 {
        return;
    }
    let mut edge_grad = vec![Vec3::zeros(); m];
    graph
        .edges()
        .par_iter()
        .zip(edge_grad.par_iter_mut())
        .for_each(|(e, g)| {
            let diff = rotated_t[e.source as usize] - rotated_t1[e.target as usize];
            *g = huber_deriv_vec(&diff, delta) * e.weight;
        });

    let coeff = scale / m as f64;
    let rot_t_back = maps.0.rotation().transpose();
    let rot_t1_back = maps.1.rotation().transpose();
    out_t.par_iter_mut().enumerate().for_each(|(node, g)| {
        let mut acc = Vec3::zeros();
        for idx in graph.outgoing_range(node) {
            acc += edge_grad[idx];
        }
        *g += rot_t_back * acc * coeff;
    });
    out_t1.par_iter_mut().enumerate().for_each(|(node, g)| {
        let mut acc = Vec3::zeros();
        for &edge_idx in graph.incoming(node) {
            acc += edge_grad[edge_idx as usize];
        }
        *g -= rot_t1_back * acc * coeff;
    });
}

fn validate_temporal_inputs(
    field_t: &NormalField,
    field_t1: &NormalField,
    graph: &WeightedGraph,
    huber_delta: f64,
) -> Result<(), EnergyError> {
    let GraphNodes::Bipartite { sources, targets } = graph.nodes() else {
        return Err(EnergyError::WrongGraphKind {
            expected: "bipartite",
        });
    };
    if sources != field_t.len() {
        return Err(EnergyError::GraphMismatch {
            graph: sources,
            field: field_t.len(),
        });
    }
    if targets != field_t1.len() {
        return Err(EnergyError::GraphMismatch {
            graph: targets,
            field: field_t1.len(),
        });
    }
    if !huber_delta.is_finite() || huber_delta <= 0.0 {
        return Err(EnergyError::InvalidDelta(huber_delta));
    }
    Ok(())
}

/// Cross-frame smoothness: both fields are rotated into the common frame by
/// the rotation parts of `maps` (the same maps that built the bipartite
/// graph), differenced over its edges, and averaged. The returned gradient
/// concatenates frame `t` then frame `t+1`.
pub fn tgtv_energy(
    field_t: &NormalField,
    field_t1: &NormalField,
    graph: &WeightedGraph,
    maps: (&Pose, &Pose),
    huber_delta: f64,
) -> Result<EnergyReport, EnergyError> {
    validate_temporal_inputs(field_t, field_t1, graph, huber_delta)?;

    let rotated_t = rotate_field(&field_t.normals, maps.0);
    let rotated_t1 = rotate_field(&field_t1.normals, maps.1);
    let value = temporal_value_slice(graph, &rotated_t, &rotated_t1, huber_delta);

    let mut grad_t = vec![Vec3::zeros(); field_t.len()];
    let mut grad_t1 = vec![Vec3::zeros(); field_t1.len()];
    temporal_grad_into(
        graph,
        &rotated_t,
        &rotated_t1,
        maps,
        huber_delta,
        1.0,
        &mut grad_t,
        &mut grad_t1,
    );
    let mut gradient = grad_t;
    gradient.extend(grad_t1);
    Ok(EnergyReport { value, gradient })
}

/// Value-only fast path of [`tgtv_energy`].
pub fn tgtv_value(
    field_t: &NormalField,
    field_t1: &NormalField,
    graph: &WeightedGraph,
    maps: (&Pose, &Pose),
    huber_delta: f64,
) -> Result<f64, EnergyError> {
    validate_temporal_inputs(field_t, field_t1, graph, huber_delta)?;
    let rotated_t = rotate_field(&field_t.normals, maps.0);
    let rotated_t1 = rotate_field(&field_t1.normals, maps.1);
    Ok(temporal_value_slice(
        graph,
        &rotated_t,
        &rotated_t1,
        huber_delta,
    ))
}

// ---------------------------------------------------------------------------
// Unit-norm term
// ---------------------------------------------------------------------------

pub(crate) fn eikonal_value_slice(field: &[Vec3]) -> f64 {
    if field.is_empty() {
        return 0.0;
    }
    chunked_sum(field, |n| {
        let d = n.norm() - 1.0;
        d * d
    }) / field.len() as f64
}

pub(crate) fn eikonal_grad_into(field: &[Vec3], scale: f64, out: &mut [Vec3]) {
    if field.is_empty() {
        return;
    }
    let coeff = scale / field.len() as f64;
    out.par_iter_mut().enumerate().for_each(|(i, g)| {
        let norm = field[i].norm();
        // At the origin the true gradient is undefined; 0 keeps determinism.
        if norm > 0.0 {
            *g += field[i] * (2.0 * (norm - 1.0) / norm * coeff);
        }
    });
}

/// Mean squared deviation of vector norms from 1.
pub fn eikonal_energy(field: &NormalField) -> EnergyReport {
    let value = eikonal_value_slice(&field.normals);
    let mut gradient = vec![Vec3::zeros(); field.len()];
    eikonal_grad_into(&field.normals, 1.0, &mut gradient);
    EnergyReport { value, gradient }
}

/// Value-only fast path of [`eikonal_energy`].
pub fn eikonal_value(field: &NormalField) -> f64 {
    eikonal_value_slice(&field.normals)
}

// ---------------------------------------------------------------------------
// Combination
// ---------------------------------------------------------------------------

/// `data + gamma * sum(regularizers)`, for both values and gradients. All
/// gradients must have the same length.
pub fn total_objective(
    data: &EnergyReport,
    regularizers: &[&EnergyReport],
    gamma: f64,
) -> Result<EnergyReport, EnergyError> {
    for reg in regularizers {
        if reg.gradient.len() != data.gradient.len() {
            return Err(EnergyError::LengthMismatch {
                left: reg.gradient.len(),
                right: data.gradient.len(),
            });
        }
    }
    let value = data.value + gamma * regularizers.iter().map(|r| r.value).sum::<f64>();
    let mut gradient = data.gradient.clone();
    for reg in regularizers {
        for (g, r) in gradient.iter_mut().zip(&reg.gradient) {
            *g += r * gamma;
        }
    }
    Ok(EnergyReport { value, gradient })
}
