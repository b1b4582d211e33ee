//! Exact 3-D k-nearest-neighbour index.
//!
//! Trees are immutable after construction and rebuilt per depth frame; at a
//! few thousand points a rebuild is cheaper than maintaining incremental
//! updates. Queries are exact: results always match an exhaustive scan,
//! with ties at equal distance broken by lowest insertion index so that
//! repeated runs are reproducible.

use alloc::vec::Vec;

use nalgebra::Vector3;

use crate::{Error, Result};

#[derive(Debug, Clone)]
struct Node {
    point: Vector3<f64>,
    /// Position in the original input list; the tie-break key.
    index: u32,
    axis: usize,
    left: i32,
    right: i32,
}

/// Balanced KD-tree over `Vector3<f64>` points.
#[derive(Debug, Clone)]
pub struct KdTree {
    nodes: Vec<Node>,
    root: i32,
}

const NONE: i32 = -1;

impl Default for KdTree {
    fn default() -> Self {
        KdTree { nodes: Vec::new(), root: NONE }
    }
}

impl KdTree {
    /// Build a tree over the given points. Median split on the axis of
    /// largest extent keeps the depth balanced for worst-case queries.
    pub fn build(points: &[Vector3<f64>]) -> Result<Self> {
        for p in points {
            if !(p.x.is_finite() && p.y.is_finite() && p.z.is_finite()) {
                return Err(Error::NonFinite("kd-tree point"));
            }
        }
        let mut order: Vec<u32> = (0..points.len() as u32).collect();
        let mut nodes = Vec::with_capacity(points.len());
        let root = build_rec(points, &mut order, &mut nodes);
        Ok(KdTree { nodes, root })
    }

    pub fn empty() -> Self {
        KdTree::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// The `min(k, len)` nearest points to `query`, ascending by Euclidean
    /// distance; ties resolve to the point inserted first.
    pub fn knn(&self, query: &Vector3<f64>, k: usize) -> Vec<(Vector3<f64>, f64)> {
        #[allow(unused_imports)]
        use num_traits::Float;
        debug_assert!(query.iter().all(|c| c.is_finite()), "non-finite query");
        let mut best: Vec<(f64, u32, Vector3<f64>)> = Vec::with_capacity(k.min(self.len()) + 1);
        if k > 0 {
            self.knn_rec(self.root, query, k, &mut best);
        }
        best.into_iter().map(|(d2, _, p)| (p, d2.sqrt())).collect()
    }

    /// Whether any stored point lies within `radius` (inclusive) of `query`.
    pub fn has_within(&self, query: &Vector3<f64>, radius: f64) -> bool {
        if radius < 0.0 {
            return false;
        }
        self.within_rec(self.root, query, radius * radius)
    }

    fn knn_rec(
        &self,
        id: i32,
        query: &Vector3<f64>,
        k: usize,
        best: &mut Vec<(f64, u32, Vector3<f64>)>,
    ) {
        if id == NONE {
            return;
        }
        let node = &self.nodes[id as usize];
        offer(best, k, (query - node.point).norm_squared(), node.index, node.point);

        let delta = query[node.axis] - node.point[node.axis];
        let (near, far) = if delta < 0.0 {
            (node.left, node.right)
        } else {
            (node.right, node.left)
        };
        self.knn_rec(near, query, k, best);
        // The far side can still hold a closer point, or an equally distant
        // one with a lower index, whenever the splitting plane is not
        // strictly beyond the current worst candidate.
        let worst = best.last().map(|b| b.0);
        if best.len() < k || delta * delta <= worst.unwrap_or(f64::INFINITY) {
            self.knn_rec(far, query, k, best);
        }
    }

    fn within_rec(&self, id: i32, query: &Vector3<f64>, r2: f64) -> bool {
        if id == NONE {
            return false;
        }
        let node = &self.nodes[id as usize];
        if (query - node.point).norm_squared() <= r2 {
            return true;
        }
        let delta = query[node.axis] - node.point[node.axis];
        let (near, far) = if delta < 0.0 {
            (node.left, node.right)
        } else {
            (node.right, node.left)
        };
        if self.within_rec(near, query, r2) {
            return true;
        }
        delta * delta <= r2 && self.within_rec(far, query, r2)
    }

    /// Iterate stored points in insertion order.
    pub fn iter_points(&self) -> impl Iterator<Item = Vector3<f64>> + '_ {
        let mut pts: Vec<(u32, Vector3<f64>)> =
            self.nodes.iter().map(|n| (n.index, n.point)).collect();
        pts.sort_unstable_by_key(|(i, _)| *i);
        pts.into_iter().map(|(_, p)| p)
    }
}

/// Insert a candidate into the sorted best-list, keeping at most `k`.
fn offer(
    best: &mut Vec<(f64, u32, Vector3<f64>)>,
    k: usize,
    d2: f64,
    index: u32,
    point: Vector3<f64>,
) {
    let key = (d2, index);
    let pos = best.partition_point(|b| (b.0, b.1) < key);
    if pos < k {
        best.insert(pos, (d2, index, point));
        best.truncate(k);
    }
}

fn build_rec(points: &[Vector3<f64>], order: &mut [u32], nodes: &mut Vec<Node>) -> i32 {
    if order.is_empty() {
        return NONE;
    }
    // Split axis: largest extent of the subset.
    let mut lo = Vector3::repeat(f64::INFINITY);
    let mut hi = Vector3::repeat(f64::NEG_INFINITY);
    for &i in order.iter() {
        let p = points[i as usize];
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
    // Full sort on (coordinate, insertion index): a total order, so the
    // median choice never depends on the incoming permutation.
    order.sort_unstable_by(|&a, &b| {
        let ka = (points[a as usize][axis], a);
        let kb = (points[b as usize][axis], b);
        ka.partial_cmp(&kb).expect("finite coordinates")
    });
    let mid = order.len() / 2;
    let index = order[mid];
    let id = nodes.len() as i32;
    nodes.push(Node { point: points[index as usize], index, axis, left: NONE, right: NONE });
    let (left_half, rest) = order.split_at_mut(mid);
    let left = build_rec(points, left_half, nodes);
    let right = build_rec(points, &mut rest[1..], nodes);
    nodes[id as usize].left = left;
    nodes[id as usize].right = right;
    id
}
