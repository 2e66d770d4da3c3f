//! Exact kd-tree over 3D points.
//!
//! Nodes split at the median of the widest axis. Queries are exact: a subtree
//! is skipped only when its bounding box is strictly farther than the current
//! k-th candidate, so distance ties are always resolved by the lower index.

use crate::linalg3::Vec3;
use std::cmp::Ordering;
use std::collections::BinaryHeap;

const LEAF_SIZE: usize = 12;

#[derive(Debug, Clone)]
enum Node {
    Leaf { start: usize, end: usize },
    Split { axis: usize, value: f64, left: usize, right: usize },
}

#[derive(Debug, Clone)]
pub struct KdTree {
    points: Vec<Vec3>,
    order: Vec<u32>,
    nodes: Vec<Node>,
    bounds: Vec<(Vec3, Vec3)>,
}

/// Candidate ordered by (squared distance, index).
#[derive(Debug, Clone, Copy, PartialEq)]
struct Candidate {
    dist_sq: f64,
    index: u32,
}

impl Eq for Candidate {}

impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        self.dist_sq.total_cmp(&other.dist_sq).then(self.index.cmp(&other.index))
    }
}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl KdTree {
    pub fn new(points: &[Vec3]) -> Self {
        let mut tree = KdTree {
            points: points.to_vec(),
            order: (0..points.len() as u32).collect(),
            nodes: Vec::new(),
            bounds: Vec::new(),
        };
        if !points.is_empty() {
            tree.build(0, points.len());
        }
        tree
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Vec3] {
        &self.points
    }

    fn build(&mut self, start: usize, end: usize) -> usize {
        let (lo, hi) = self.order[start..end].iter().fold(
            (Vec3::repeat(f64::INFINITY), Vec3::repeat(f64::NEG_INFINITY)),
            |(lo, hi), &i| {
                let p = self.points[i as usize];
                (lo.inf(&p), hi.sup(&p))
            },
        );
        let id = self.nodes.len();
        self.nodes.push(Node::Leaf { start, end });
        self.bounds.push((lo, hi));
        if end - start <= LEAF_SIZE {
            return id;
        }
        let axis = (hi - lo).imax();
        let mid = start + (end - start) / 2;
        let points = &self.points;
        self.order[start..end].select_nth_unstable_by(mid - start, |&a, &b| {
            points[a as usize][axis]
                .total_cmp(&points[b as usize][axis])
                .then(a.cmp(&b))
        });
        let value = self.points[self.order[mid] as usize][axis];
        let left = self.build(start, mid);
        let right = self.build(mid, end);
        self.nodes[id] = Node::Split { axis, value, left, right };
        id
    }

    fn box_dist_sq(&self, node: usize, q: &Vec3) -> f64 {
        let (lo, hi) = &self.bounds[node];
        (0..3)
            .map(|a| {
                let d = (lo[a] - q[a]).max(0.0).max(q[a] - hi[a]);
                d * d
            })
            .sum()
    }

    /// The `k` nearest points to `query`, ascending by (distance, index),
    /// skipping `exclude` if given. Returns `(index, squared distance)`.
    pub fn knn(&self, query: &Vec3, k: usize, exclude: Option<usize>) -> Vec<(usize, f64)> {
        if k == 0 || self.points.is_empty() {
            return Vec::new();
        }
        let mut heap: BinaryHeap<Candidate> = BinaryHeap::with_capacity(k + 1);
        self.search(0, query, k, exclude.map(|e| e as u32), &mut heap);
        let mut out: Vec<Candidate> = heap.into_vec();
        out.sort();
        out.into_iter().map(|c| (c.index as usize, c.dist_sq)).collect()
    }

    /// Nearest point to `query` as `(index, distance)`.
    pub fn nearest(&self, query: &Vec3) -> Option<(usize, f64)> {
        self.knn(query, 1, None).first().map(|&(i, d2)| (i, d2.sqrt()))
    }

    fn search(
        &self,
        node: usize,
        q: &Vec3,
        k: usize,
        exclude: Option<u32>,
        heap: &mut BinaryHeap<Candidate>,
    ) {
        if heap.len() == k && self.box_dist_sq(node, q) > heap.peek().map_or(f64::INFINITY, |c| c.dist_sq) {
            return;
        }
        match self.nodes[node] {
            Node::Leaf { start, end } => {
                for &i in &self.order[start..end] {
                    if Some(i) == exclude {
                        continue;
                    }
                    let cand = Candidate { dist_sq: (self.points[i as usize] - q).norm_squared(), index: i };
                    if heap.len() < k {
                        heap.push(cand);
                    } else if heap.peek().is_some_and(|worst| cand < *worst) {
                        heap.pop();
                        heap.push(cand);
                    }
                }
            }
            Node::Split { axis, value, left, right } => {
                let (near, far) = if q[axis] < value { (left, right) } else { (right, left) };
                self.search(near, q, k, exclude, heap);
                self.search(far, q, k, exclude, heap);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn brute(points: &[Vec3], q: &Vec3, k: usize, exclude: Option<usize>) -> Vec<(usize, f64)> {
        let mut all: Vec<(usize, f64)> = points
            .iter()
            .enumerate()
            .filter(|(i, _)| Some(*i) != exclude)
            .map(|(i, p)| (i, (p - q).norm_squared()))
            .collect();
        all.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
        all.truncate(k);
        all
    }

    #[test]
    fn matches_brute_force_with_grid_ties() {
        let mut pts = Vec::new();
        for x in 0..8 {
            for y in 0..8 {
                for z in 0..3 {
                    pts.push(Vec3::new(x as f64, y as f64, z as f64));
                }
            }
        }
        let tree = KdTree::new(&pts);
        for (i, p) in pts.iter().enumerate() {
            assert_eq!(tree.knn(p, 10, Some(i)), brute(&pts, p, 10, Some(i)));
        }
    }

    #[test]
    fn matches_brute_force_random() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let pts: Vec<Vec3> = (0..500)
            .map(|_| Vec3::new(rng.random(), rng.random(), rng.random()))
            .collect();
        let tree = KdTree::new(&pts);
        for _ in 0..100 {
            let q = Vec3::new(rng.random(), rng.random(), rng.random());
            assert_eq!(tree.knn(&q, 7, None), brute(&pts, &q, 7, None));
        }
    }

    #[test]
    fn k_larger_than_cloud() {
        let pts = vec![Vec3::zeros(), Vec3::x()];
        let tree = KdTree::new(&pts);
        assert_eq!(tree.knn(&Vec3::zeros(), 5, None).len(), 2);
        assert!(KdTree::new(&[]).nearest(&Vec3::zeros()).is_none());
    }
}
