//! Weighted neighborhood graphs over point clouds.
//!
//! Edges carry Gaussian-decay weights `w = exp(-d^2 / sigma^2)` of the
//! Euclidean distance between their endpoints. Within one frame the graph is
//! a directed k-nearest-neighbor graph (no self loops, `|E| = N * k`);
//! across two frames it is bipartite, built after mapping both clouds out of
//! their augmentations and into the shared world frame, so that static
//! structure lines up and edge weights measure true spatial proximity.
//!
//! Construction is deterministic: neighbor candidates order by
//! (distance, index), so equidistant ties always pick the lower index.

use rayon::prelude::*;
use thiserror::Error;

use crate::frame::Frame;
use crate::geom::{Pose, Vec3};
use crate::spatial::KdTree;

/// Default neighborhood size; see also [`suggest_k`] for a data-driven pick.
pub const DEFAULT_K: usize = 8;
/// Default edge-weight decay scale in meters.
pub const DEFAULT_SIGMA: f64 = 0.1;

#[derive(Debug, Error, PartialEq)]
pub enum GraphError {
    #[error("need at least 2 points to build a neighborhood graph, got {0}")]
    TooFewPoints(usize),
    #[error("k must be >= 1")]
    InvalidK,
    #[error("sigma must be > 0, got {0}")]
    InvalidSigma(f64),
    #[error("frame {0} is empty")]
    EmptyFrame(u32),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GraphEdge {
    pub source: u32,
    pub target: u32,
    pub weight: f64,
}

/// Node layout: one shared node set, or a source/target split for the
/// cross-frame form.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GraphNodes {
    Unipartite(usize),
    Bipartite { sources: usize, targets: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeightedGraph {
    /// Grouped by source node, ascending.
    edges: Vec<GraphEdge>,
    /// CSR offsets into `edges` per source node.
    out_offsets: Vec<u32>,
    /// Edge indices grouped by target node.
    in_edges: Vec<u32>,
    in_offsets: Vec<u32>,
    nodes: GraphNodes,
    sigma: f64,
    k: usize,
}

impl WeightedGraph {
    fn from_parts(edges: Vec<GraphEdge>, nodes: GraphNodes, sigma: f64, k: usize) -> Self {
        let (n_sources, n_targets) = match nodes {
            GraphNodes::Unipartite(n) => (n, n),
            GraphNodes::Bipartite { sources, targets } => (sources, targets),
        };

        let mut out_offsets = vec![0u32; n_sources + 1];
        for e in &edges {
            out_offsets[e.source as usize + 1] += 1;
        }
        for i in 0..n_sources {
            out_offsets[i + 1] += out_offsets[i];
        }

        let mut in_offsets = vec![0u32; n_targets + 1];
        for e in &edges {
            in_offsets[e.target as usize + 1] += 1;
        }
        for i in 0..n_targets {
            in_offsets[i + 1] += in_offsets[i];
        }
        let mut cursor = in_offsets.clone();
        let mut in_edges = vec![0u32; edges.len()];
        for (idx, e) in edges.iter().enumerate() {
            let slot = cursor[e.target as usize];
            in_edges[slot as usize] = idx as u32;
            cursor[e.target as usize] += 1;
        }

        Self {
            edges,
            out_offsets,
            in_edges,
            in_offsets,
            nodes,
            sigma,
            k,
        }
    }

    pub fn edges(&self) -> &[GraphEdge] {
        &self.edges
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn nodes(&self) -> GraphNodes {
        self.nodes
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn k(&self) -> usize {
        self.k
    }

    /// Edges leaving `source`.
    pub fn outgoing(&self, source: usize) -> &[GraphEdge] {
        &self.edges[self.outgoing_range(source)]
    }

    /// Index range into `edges()` covering the edges leaving `source`.
    pub fn outgoing_range(&self, source: usize) -> std::ops::Range<usize> {
        self.out_offsets[source] as usize..self.out_offsets[source + 1] as usize
    }

    /// Indices (into `edges`) of edges arriving at `target`.
    pub fn incoming(&self, target: usize) -> &[u32] {
        let lo = self.in_offsets[target] as usize;
        let hi = self.in_offsets[target + 1] as usize;
        &self.in_edges[lo..hi]
    }
}

/// `exp(-d^2 / sigma^2)`; underflows to 0 for distances far beyond `sigma`.
pub fn gaussian_weight(dist_sq: f64, sigma: f64) -> f64 {
    (-dist_sq / (sigma * sigma)).exp()
}

/// Directed k-nearest-neighbor graph with Gaussian edge weights. Each node
/// gets `min(k, n-1)` outgoing edges ordered by (distance, index).
pub fn build_knn_graph(points: &[Vec3], k: usize, sigma: f64) -> Result<WeightedGraph, GraphError> {
    if points.len() < 2 {
        return Err(GraphError::TooFewPoints(points.len()));
    }
    if k < 1 {
        return Err(GraphError::InvalidK);
    }
    if !sigma.is_finite() || sigma <= 0.0 {
        return Err(GraphError::InvalidSigma(sigma));
    }

    let k_eff = k.min(points.len() - 1);
    let tree = KdTree::build(points);

    let per_node: Vec<Vec<GraphEdge>> = points
        .par_iter()
        .enumerate()
        .map(|(i, p)| {
            tree.nearest(p, k_eff + 1)
                .into_iter()
                .filter(|n| n.index as usize != i)
                .take(k_eff)
                .map(|n| GraphEdge {
                    source: i as u32,
                    target: n.index,
                    weight: gaussian_weight(n.dist_sq, sigma),
                })
                .collect()
        })
        .collect();

    let edges: Vec<GraphEdge> = per_node.into_iter().flatten().collect();
    Ok(WeightedGraph::from_parts(
        edges,
        GraphNodes::Unipartite(points.len()),
        sigma,
        k_eff,
    ))
}

/// The per-frame rigid maps that carry stored (sensor-frame) attributes into
/// the common frame used by the cross-frame graph: first the frame pose, then
/// the inverse of the frame's augmentation.
pub fn temporal_maps(
    frame_t: &Frame,
    frame_t1: &Frame,
    aug_t: &Pose,
    aug_t1: &Pose,
) -> (Pose, Pose) {
    (
        aug_t.inverse().compose(&frame_t.pose),
        aug_t1.inverse().compose(&frame_t1.pose),
    )
}

/// Bipartite graph linking each point of `frame_t` to its `k` nearest points
/// of `frame_t1`, distances measured after both clouds are mapped by
/// [`temporal_maps`].
pub fn build_temporal_graph(
    frame_t: &Frame,
    frame_t1: &Frame,
    aug_t: &Pose,
    aug_t1: &Pose,
    k: usize,
    sigma: f64,
) -> Result<WeightedGraph, GraphError> {
    if frame_t.is_empty() {
        return Err(GraphError::EmptyFrame(frame_t.frame_id));
    }
    if frame_t1.is_empty() {
        return Err(GraphError::EmptyFrame(frame_t1.frame_id));
    }
    if k < 1 {
        return Err(GraphError::InvalidK);
    }
    if !sigma.is_finite() || sigma <= 0.0 {
        return Err(GraphError::InvalidSigma(sigma));
    }

    let (map_t, map_t1) = temporal_maps(frame_t, frame_t1, aug_t, aug_t1);
    let mapped_t: Vec<Vec3> = frame_t
        .points
        .par_iter()
        .map(|p| map_t.transform_point(p))
        .collect();
    let mapped_t1: Vec<Vec3> = frame_t1
        .points
        .par_iter()
        .map(|p| map_t1.transform_point(p))
        .collect();

    let k_eff = k.min(mapped_t1.len());
    let tree = KdTree::build(&mapped_t1);

    let per_node: Vec<Vec<GraphEdge>> = mapped_t
        .par_iter()
        .enumerate()
        .map(|(i, p)| {
            tree.nearest(p, k_eff)
                .into_iter()
                .map(|n| GraphEdge {
                    source: i as u32,
                    target: n.index,
                    weight: gaussian_weight(n.dist_sq, sigma),
                })
                .collect()
        })
        .collect();

    let edges: Vec<GraphEdge> = per_node.into_iter().flatten().collect();
    Ok(WeightedGraph::from_parts(
        edges,
        GraphNodes::Bipartite {
            sources: frame_t.len(),
            targets: frame_t1.len(),
        },
        sigma,
        k_eff,
    ))
}

/// Neighborhood-size guideline: the median number of other points within
/// `radius` of each point (at least 1).
pub fn suggest_k(points: &[Vec3], radius: f64) -> usize {
    if points.is_empty() {
        return 1;
    }
    let tree = KdTree::build(points);
    let mut counts: Vec<usize> = points
        .par_iter()
        .map(|p| tree.count_within(p, radius).saturating_sub(1))
        .collect();
    counts.sort_unstable();
    counts[(counts.len() - 1) / 2].max(1)
}
