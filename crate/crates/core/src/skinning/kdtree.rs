//! Exact nearest-neighbour search over a static point set.

use crate::geometry::Vec3;

#[derive(Debug, Clone)]
pub struct KdTree {
    points: Vec<Vec3>,
    nodes: Vec<Node>,
    root: Option<usize>,
}

#[derive(Debug, Clone)]
struct Node {
    point: usize,
    axis: usize,
    left: Option<usize>,
    right: Option<usize>,
}

impl KdTree {
    pub fn new(points: &[Vec3]) -> Self {
        let mut tree = KdTree {
            points: points.to_vec(),
            nodes: Vec::with_capacity(points.len()),
            root: None,
        };
        let mut idx: Vec<usize> = (0..points.len()).collect();
        tree.root = tree.build(&mut idx, 0);
        tree
    }

    fn build(&mut self, idx: &mut [usize], depth: usize) -> Option<usize> {
        if idx.is_empty() {
            return None;
        }
        let axis = depth % 3;
        let pts = &self.points;
        idx.sort_by(|a, b| pts[*a][axis].total_cmp(&pts[*b][axis]).then(a.cmp(b)));
        let mid = idx.len() / 2;
        let point = idx[mid];
        let (lo, hi) = idx.split_at_mut(mid);
        let left = self.build(lo, depth + 1);
        let right = self.build(&mut hi[1..], depth + 1);
        self.nodes.push(Node { point, axis, left, right });
        Some(self.nodes.len() - 1)
    }

    /// Index of and squared distance to the nearest point; ties go to the lower index.
    pub fn nearest(&self, q: &Vec3) -> Option<(usize, f64)> {
        let mut best = (usize::MAX, f64::INFINITY);
        self.search(self.root, q, &mut best);
        (best.0 != usize::MAX).then_some(best)
    }

    fn search(&self, node: Option<usize>, q: &Vec3, best: &mut (usize, f64)) {
        let Some(n) = node else { return };
        let node = &self.nodes[n];
        let p = &self.points[node.point];
        let d2 = (p - q).norm_squared();
        if d2 < best.1 || (d2 == best.1 && node.point < best.0) {
            *best = (node.point, d2);
        }
        let diff = q[node.axis] - p[node.axis];
        let (near, far) = if diff < 0.0 { (node.left, node.right) } else { (node.right, node.left) };
        self.search(near, q, best);
        if diff * diff <= best.1 {
            self.search(far, q, best);
        }
    }

    /// The `k` nearest points (excluding exact index `skip`), closest first.
    pub fn k_nearest(&self, q: &Vec3, k: usize, skip: Option<usize>) -> Vec<(usize, f64)> {
        let mut out: Vec<(usize, f64)> = Vec::with_capacity(k + 1);
        self.search_k(self.root, q, k, skip, &mut out);
        out
    }

    fn search_k(&self, node: Option<usize>, q: &Vec3, k: usize, skip: Option<usize>, out: &mut Vec<(usize, f64)>) {
        let Some(n) = node else { return };
        let node = &self.nodes[n];
        let p = &self.points[node.point];
        if Some(node.point) != skip {
            let d2 = (p - q).norm_squared();
            if out.len() < k || d2 < out[out.len() - 1].1 {
                let pos = out.partition_point(|e| e.1 <= d2);
                out.insert(pos, (node.point, d2));
                out.truncate(k);
            }
        }
        let diff = q[node.axis] - p[node.axis];
        let (near, far) = if diff < 0.0 { (node.left, node.right) } else { (node.right, node.left) };
        self.search_k(near, q, k, skip, out);
        if out.len() < k || diff * diff <= out[out.len() - 1].1 {
            self.search_k(far, q, k, skip, out);
        }
    }
}
