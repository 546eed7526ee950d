//! Exact k-nearest-neighbor search over 3D points.
//!
//! A median-split kd-tree with an explicit lexicographic order on
//! `(squared distance, point index)`. Equidistant candidates therefore always
//! resolve to the lower index, which keeps every consumer (estimator
//! neighborhoods, graph edges) deterministic and independent of build order.

use crate::geom::Vec3;

const LEAF_SIZE: usize = 16;

#[derive(Debug, Clone, Copy)]
struct Node {
    /// Split coordinate along `axis`; children cover `[lo, split]` / `(split, hi]`.
    split: f64,
    axis: u8,
    /// Index of the right child in `nodes`; the left child is `self + 1`.
    /// `u32::MAX` marks a leaf.
    right: u32,
    /// Range into `order` covered by this subtree.
    start: u32,
    end: u32,
}

const LEAF: u32 = u32::MAX;

#[derive(Debug, Clone)]
pub struct KdTree {
    points: Vec<[f64; 3]>,
    /// Permutation of point indices arranged by the recursive splits.
    order: Vec<u32>,
    nodes: Vec<Node>,
}

/// A neighbor returned by [`KdTree::nearest`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Neighbor {
    pub index: u32,
    pub dist_sq: f64,
}

impl Neighbor {
    /// Lexicographic (distance, index): the ordering used everywhere.
    fn worse_than(&self, other: &Neighbor) -> bool {
        (self.dist_sq, self.index) > (other.dist_sq, other.index)
    }
}

/// Bounded max-"heap" over (dist_sq, index); k is small (<= a few dozen), so a
/// sorted insert into a Vec beats a binary heap in practice.
struct BoundedBest {
    items: Vec<Neighbor>,
    cap: usize,
}

impl BoundedBest {
    fn new(cap: usize) -> Self {
        Self {
            items: Vec::with_capacity(cap),
            cap,
        }
    }

    fn full(&self) -> bool {
        self.items.len() == self.cap
    }

    /// Current worst accepted distance, or +inf while not full.
    fn bound(&self) -> f64 {
        if self.full() {
            self.items
                .last()
                .map(|n| n.dist_sq)
                .unwrap_or(f64::INFINITY)
        } else {
            f64::INFINITY
        }
    }

    fn push(&mut self, cand: Neighbor) {
        if self.full() {
            let worst = *self.items.last().unwrap();
            if cand.worse_than(&worst) {
                return;
            }
            self.items.pop();
        }
        let pos = self
            .items
            .partition_point(|n| (n.dist_sq, n.index) < (cand.dist_sq, cand.index));
        self.items.insert(pos, cand);
    }
}

fn dist_sq(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    let dz = a[2] - b[2];
    dx * dx + dy * dy + dz * dz
}

impl KdTree {
    pub fn build(points: &[Vec3]) -> Self {
        let pts: Vec<[f64; 3]> = points.iter().map(|p| [p.x, p.y, p.z]).collect();
        let mut order: Vec<u32> = (0..pts.len() as u32).collect();
        let mut nodes = Vec::new();
        if !pts.is_empty() {
            build_recursive(&pts, &mut order, 0, pts.len(), &mut nodes);
        }
        Self {
            points: pts,
            order,
            nodes,
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// The `k` nearest stored points to `query`, ascending by
    /// (distance, index). A stored point at the query location is returned
    /// like any other (callers exclude self-matches by index).
    pub fn nearest(&self, query: &Vec3, k: usize) -> Vec<Neighbor> {
        let mut best = BoundedBest::new(k.min(self.points.len()));
        if k == 0 || self.points.is_empty() {
            return best.items;
        }
        let q = [query.x, query.y, query.z];
        self.search(0, &q, &mut best);
        best.items
    }

    /// Number of stored points with distance <= `radius` from `query`.
    pub fn count_within(&self, query: &Vec3, radius: f64) -> usize {
        if self.points.is_empty() || radius < 0.0 {
            return 0;
        }
        let q = [query.x, query.y, query.z];
        self.count_recursive(0, &q, radius * radius)
    }

    fn search(&self, node_idx: u32, q: &[f64; 3], best: &mut BoundedBest) {
        let node = self.nodes[node_idx as usize];
        if node.right == LEAF {
            for &idx in &self.order[node.start as usize..node.end as usize] {
                let d2 = dist_sq(&self.points[idx as usize], q);
                best.push(Neighbor {
                    index: idx,
                    dist_sq: d2,
                });
            }
            return;
        }
        let delta = q[node.axis as usize] - node.split;
        let (near, far) = if delta <= 0.0 {
            (node_idx + 1, node.right)
        } else {
            (node.right, node_idx + 1)
        };
        self.search(near, q, best);
        // Visit the far side on ties too, so equal-distance candidates with a
        // lower index are never pruned away.
        if delta * delta <= best.bound() {
            self.search(far, q, best);
        }
    }

    fn count_recursive(&self, node_idx: u32, q: &[f64; 3], r2: f64) -> usize {
        let node = self.nodes[node_idx as usize];
        if node.right == LEAF {
            return self.order[node.start as usize..node.end as usize]
                .iter()
                .filter(|&&idx| dist_sq(&self.points[idx as usize], q) <= r2)
                .count();
        }
        let delta = q[node.axis as usize] - node.split;
        let (near, far) = if delta <= 0.0 {
            (node_idx + 1, node.right)
        } else {
            (node.right, node_idx + 1)
        };
        let mut total = self.count_recursive(near, q, r2);
        if delta * delta <= r2 {
            total += self.count_recursive(far, q, r2);
        }
        total
    }
}

fn build_recursive(
    pts: &[[f64; 3]],
    order: &mut [u32],
    start: usize,
    end: usize,
    nodes: &mut Vec<Node>,
) -> u32 {
    let my_idx = nodes.len() as u32;
    let span = &mut order[start..end];
    if span.len() <= LEAF_SIZE {
        nodes.push(Node {
            split: 0.0,
            axis: 0,
            right: LEAF,
            start: start as u32,
            end: end as u32,
        });
        return my_idx;
    }

    // Split on the axis with the widest extent.
    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    for &i in span.iter() {
        let p = &pts[i as usize];
        for a in 0..3 {
            lo[a] = lo[a].min(p[a]);
            hi[a] = hi[a].max(p[a]);
        }
    }
    let mut axis = 0;
    for a in 1..3 {
        if hi[a] - lo[a] > hi[axis] - lo[axis] {
            axis = a;
        }
    }

    let mid = span.len() / 2;
    span.select_nth_unstable_by(mid, |&a, &b| {
        (pts[a as usize][axis], a)
            .partial_cmp(&(pts[b as usize][axis], b))
            .unwrap()
    });
    let split = pts[span[mid] as usize][axis];

    nodes.push(Node {
        split,
        axis: axis as u8,
        right: 0, // patched below
        start: start as u32,
        end: end as u32,
    });
    build_recursive(pts, order, start, start + mid, nodes);
    let right = build_recursive(pts, order, start + mid, end, nodes);
    nodes[my_idx as usize].right = right;
    my_idx
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    /// Oracle: exhaustive scan with the same (dist, index) order.
    fn brute_nearest(points: &[Vec3], query: &Vec3, k: usize) -> Vec<Neighbor> {
        let mut all: Vec<Neighbor> = points
            .iter()
            .enumerate()
            .map(|(i, p)| Neighbor {
                index: i as u32,
                dist_sq: (p - query).norm_squared(),
            })
            .collect();
        all.sort_by(|a, b| {
            (a.dist_sq, a.index)
                .partial_cmp(&(b.dist_sq, b.index))
                .unwrap()
        });
        all.truncate(k);
        all
    }

    fn random_cloud(n: usize, seed: u64) -> Vec<Vec3> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| {
                Vec3::new(
                    rng.random::<f64>() * 10.0 - 5.0,
                    rng.random::<f64>() * 10.0 - 5.0,
                    rng.random::<f64>() * 2.0,
                )
            })
            .collect()
    }

    #[test]
    fn matches_brute_force_on_random_clouds() {
        for seed in 0..4u64 {
            let cloud = random_cloud(500, seed);
            let tree = KdTree::build(&cloud);
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xabcd);
            for _ in 0..50 {
                let q = Vec3::new(
                    rng.random::<f64>() * 12.0 - 6.0,
                    rng.random::<f64>() * 12.0 - 6.0,
                    rng.random::<f64>() * 3.0 - 0.5,
                );
                for k in [1, 3, 9, 33] {
                    assert_eq!(tree.nearest(&q, k), brute_nearest(&cloud, &q, k));
                }
            }
        }
    }

    #[test]
    fn ties_resolve_to_lower_index() {
        // Duplicate coordinates: indices 1 and 3 share a location.
        let cloud = vec![
            Vec3::new(0.0, 0.0, 0.0),
            Vec3::new(1.0, 0.0, 0.0),
            Vec3::new(2.0, 0.0, 0.0),
            Vec3::new(1.0, 0.0, 0.0),
        ];
        let tree = KdTree::build(&cloud);
        let found = tree.nearest(&Vec3::new(1.0, 0.0, 0.0), 2);
        assert_eq!(found[0].index, 1);
        assert_eq!(found[1].index, 3);
        assert_eq!(found[0].dist_sq, 0.0);
        assert_eq!(found[1].dist_sq, 0.0);
    }

    #[test]
    fn count_within_matches_scan() {
        let cloud = random_cloud(300, 7);
        let tree = KdTree::build(&cloud);
        let q = Vec3::new(0.5, -0.5, 1.0);
        for r in [0.0, 0.3, 1.0, 4.0] {
            let expect = cloud.iter().filter(|p| (*p - q).norm() <= r).count();
            assert_eq!(tree.count_within(&q, r), expect, "radius {r}");
        }
    }

    #[test]
    fn handles_small_and_empty_inputs() {
        let tree = KdTree::build(&[]);
        assert!(tree.nearest(&Vec3::zeros(), 3).is_empty());
        let tree = KdTree::build(&[Vec3::new(1.0, 1.0, 1.0)]);
        let found = tree.nearest(&Vec3::zeros(), 5);
        assert_eq!(found.len(), 1);
        assert_eq!(found[0].index, 0);
    }
}
