//! Exact k-nearest-neighbor search over 3D points.
//!
//! Neighbors are ordered by ascending squared Euclidean distance, computed in
//! `f64` from the stored `f32` coordinates. Equal distances are ordered by the
//! lower reference index, so results are fully deterministic.

use crate::error::{Error, Result};

const LEAF_SIZE: usize = 8;

#[inline]
pub fn squared_distance(a: [f32; 3], b: [f32; 3]) -> f64 {
    let dx = f64::from(a[0]) - f64::from(b[0]);
    let dy = f64::from(a[1]) - f64::from(b[1]);
    let dz = f64::from(a[2]) - f64::from(b[2]);
    dx * dx + dy * dy + dz * dz
}

#[derive(Debug, Clone)]
enum Node {
    Leaf { start: usize, end: usize },
    Split { axis: usize, value: f64, left: usize, right: usize },
}

/// Static k-d tree. Immutable after construction.
#[derive(Debug, Clone)]
pub struct KdTree {
    points: Vec<[f32; 3]>,
    order: Vec<u32>,
    nodes: Vec<Node>,
}

impl KdTree {
    pub fn build(points: &[[f32; 3]]) -> Self {
        assert!(points.len() <= u32::MAX as usize, "too many points for a k-d tree");
        let mut tree = KdTree {
            points: points.to_vec(),
            order: (0..points.len() as u32).collect(),
            nodes: Vec::new(),
        };
        if !points.is_empty() {
            tree.build_range(0, points.len());
        }
        tree
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[[f32; 3]] {
        &self.points
    }

    fn build_range(&mut self, start: usize, end: usize) -> usize {
        let id = self.nodes.len();
        if end - start <= LEAF_SIZE {
            self.nodes.push(Node::Leaf { start, end });
            return id;
        }
        let axis = self.widest_axis(start, end);
        let mid = start + (end - start) / 2;
        let points = &self.points;
        self.order[start..end].select_nth_unstable_by(mid - start, |&a, &b| {
            points[a as usize][axis].total_cmp(&points[b as usize][axis])
        });
        let value = f64::from(self.points[self.order[mid] as usize][axis]);
        self.nodes.push(Node::Leaf { start, end }); // placeholder
        let left = self.build_range(start, mid);
        let right = self.build_range(mid, end);
        self.nodes[id] = Node::Split { axis, value, left, right };
        id
    }

    fn widest_axis(&self, start: usize, end: usize) -> usize {
        let mut lo = [f32::INFINITY; 3];
        let mut hi = [f32::NEG_INFINITY; 3];
        for &i in &self.order[start..end] {
            let p = self.points[i as usize];
            for a in 0..3 {
                lo[a] = lo[a].min(p[a]);
                hi[a] = hi[a].max(p[a]);
            }
        }
        (0..3)
            .max_by(|&a, &b| (hi[a] - lo[a]).total_cmp(&(hi[b] - lo[b])))
            .unwrap_or(0)
    }

    /// Indices of the `min(k, len)` nearest points, closest first.
    pub fn knn(&self, query: [f32; 3], k: usize) -> Vec<usize> {
        self.knn_with_distances(query, k)
            .into_iter()
            .map(|(_, i)| i)
            .collect()
    }

    /// Like [`KdTree::knn`] with the squared distance of each neighbor.
    pub fn knn_with_distances(&self, query: [f32; 3], k: usize) -> Vec<(f64, usize)> {
        let k = k.min(self.len());
        if k == 0 {
            return Vec::new();
        }
        let mut best: Vec<(f64, usize)> = Vec::with_capacity(k + 1);
        let q = [f64::from(query[0]), f64::from(query[1]), f64::from(query[2])];
        self.search(0, query, q, k, &mut best);
        best
    }

    fn search(&self, node: usize, query: [f32; 3], q: [f64; 3], k: usize, best: &mut Vec<(f64, usize)>) {
        match self.nodes[node] {
            Node::Leaf { start, end } => {
                for &i in &self.order[start..end] {
                    let cand = (squared_distance(query, self.points[i as usize]), i as usize);
                    if best.len() < k || cand < best[best.len() - 1] {
                        let pos = best.partition_point(|b| *b < cand);
                        best.insert(pos, cand);
                        best.truncate(k);
                    }
                }
            }
            Node::Split { axis, value, left, right } => {
                let diff = q[axis] - value;
                let (near, far) = if diff < 0.0 { (left, right) } else { (right, left) };
                self.search(near, query, q, k, best);
                // The far side is visited even when it sits exactly at the current bound.
                if best.len() < k || diff * diff <= best[best.len() - 1].0 {
                    self.search(far, query, q, k, best);
                }
            }
        }
    }
}

/// One-shot neighbor query; builds a tree over `reference`.
pub fn knn(query: [f32; 3], reference: &[[f32; 3]], k: usize) -> Result<Vec<usize>> {
    if reference.is_empty() {
        return Err(Error::EmptyReference);
    }
    Ok(KdTree::build(reference).knn(query, k))
}
