use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::geometry::min_image;

const LEAF: usize = 16;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Metric {
    Euclidean,
    /// Minimal-image distance on the unit torus.
    Periodic,
}

impl Metric {
    #[inline]
    fn diff(self, a: f64, b: f64) -> f64 {
        match self {
            Metric::Euclidean => a - b,
            Metric::Periodic => min_image(a, b),
        }
    }

    /// Distance from `q` to the interval `[lo, hi]` along one axis.
    #[inline]
    fn gap(self, q: f64, lo: f64, hi: f64) -> f64 {
        if q >= lo && q <= hi {
            return 0.0;
        }
        match self {
            Metric::Euclidean => (lo - q).max(q - hi),
            Metric::Periodic => min_image(q, lo).abs().min(min_image(q, hi).abs()),
        }
    }

    pub fn dist2(self, a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| self.diff(*x, *y).powi(2)).sum()
    }
}

struct Node {
    lo: Vec<f64>,
    hi: Vec<f64>,
    start: usize,
    end: usize,
    children: Option<(usize, usize)>,
}

/// Read-only k-d tree over the rows of a point matrix.
pub struct KdTree<'a> {
    points: &'a [f64],
    dim: usize,
    metric: Metric,
    index: Vec<usize>,
    nodes: Vec<Node>,
}

#[derive(PartialEq)]
struct Cand(f64, usize);

impl Eq for Cand {}

impl PartialOrd for Cand {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Cand {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.total_cmp(&other.0).then(self.1.cmp(&other.1))
    }
}

impl<'a> KdTree<'a> {
    pub fn new(points: &'a [f64], dim: usize, metric: Metric) -> Self {
        assert!(dim > 0 && points.len().is_multiple_of(dim));
        let n = points.len() / dim;
        let mut tree = Self {
            points,
            dim,
            metric,
            index: (0..n).collect(),
            nodes: Vec::new(),
        };
        if n > 0 {
            tree.build(0, n);
        }
        tree
    }

    pub fn len(&self) -> usize {
        self.index.len()
    }

    pub fn is_empty(&self) -> bool {
        self.index.is_empty()
    }

    fn point(&self, i: usize) -> &[f64] {
        &self.points[i * self.dim..(i + 1) * self.dim]
    }

    fn build(&mut self, start: usize, end: usize) -> usize {
        let d = self.dim;
        let mut lo = vec![f64::INFINITY; d];
        let mut hi = vec![f64::NEG_INFINITY; d];
        for &i in &self.index[start..end] {
            for c in 0..d {
                let v = self.points[i * d + c];
                lo[c] = lo[c].min(v);
                hi[c] = hi[c].max(v);
            }
        }
        let id = self.nodes.len();
        self.nodes.push(Node { lo: lo.clone(), hi: hi.clone(), start, end, children: None });
        if end - start > LEAF {
            let axis = (0..d)
                .max_by(|a, b| (hi[*a] - lo[*a]).total_cmp(&(hi[*b] - lo[*b])))
                .unwrap_or(0);
            let mid = (start + end) / 2;
            let pts = self.points;
            self.index[start..end].select_nth_unstable_by(mid - start, |a, b| {
                pts[a * d + axis].total_cmp(&pts[b * d + axis])
            });
            let left = self.build(start, mid);
            let right = self.build(mid, end);
            self.nodes[id].children = Some((left, right));
        }
        id
    }

    fn box_dist2(&self, node: &Node, q: &[f64]) -> f64 {
        (0..self.dim)
            .map(|c| self.metric.gap(q[c], node.lo[c], node.hi[c]).powi(2))
            .sum()
    }

    /// Squared distance to the `k`-th nearest point, skipping index
    /// `exclude`.
    pub fn kth_dist2(&self, q: &[f64], k: usize, exclude: Option<usize>) -> f64 {
        assert!(k >= 1);
        let mut heap: BinaryHeap<Cand> = BinaryHeap::with_capacity(k + 1);
        if !self.nodes.is_empty() {
            self.search(0, q, k, exclude, &mut heap);
        }
        if heap.len() < k {
            f64::INFINITY
        } else {
            heap.peek().map_or(f64::INFINITY, |c| c.0)
        }
    }

    fn search(&self, id: usize, q: &[f64], k: usize, exclude: Option<usize>, heap: &mut BinaryHeap<Cand>) {
        let node = &self.nodes[id];
        if heap.len() == k && self.box_dist2(node, q) > heap.peek().map_or(f64::INFINITY, |c| c.0) {
            return;
        }
        match node.children {
            None => {
                for &i in &self.index[node.start..node.end] {
                    if Some(i) == exclude {
                        continue;
                    }
                    let d2 = self.metric.dist2(q, self.point(i));
                    if heap.len() < k {
                        heap.push(Cand(d2, i));
                    } else if d2 < heap.peek().map_or(f64::INFINITY, |c| c.0) {
                        heap.pop();
                        heap.push(Cand(d2, i));
                    }
                }
            }
            Some((l, r)) => {
                let (dl, dr) = (self.box_dist2(&self.nodes[l], q), self.box_dist2(&self.nodes[r], q));
                let (first, second) = if dl <= dr { (l, r) } else { (r, l) };
                self.search(first, q, k, exclude, heap);
                self.search(second, q, k, exclude, heap);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngStream;

    fn brute(points: &[f64], dim: usize, metric: Metric, q: &[f64], k: usize, exclude: Option<usize>) -> f64 {
        let mut d: Vec<f64> = points
            .chunks_exact(dim)
            .enumerate()
            .filter(|(i, _)| Some(*i) != exclude)
            .map(|(_, p)| metric.dist2(q, p))
            .collect();
        d.sort_by(f64::total_cmp);
        d[k - 1]
    }

    #[test]
    fn matches_brute_force() {
        let mut rng = RngStream::new(11, 0, 0, 0);
        for (dim, metric) in [(1, Metric::Periodic), (2, Metric::Euclidean), (3, Metric::Periodic), (4, Metric::Euclidean)] {
            let pts: Vec<f64> = (0..500 * dim).map(|_| rng.uniform() - 0.5).collect();
            let tree = KdTree::new(&pts, dim, metric);
            for i in 0..50 {
                let q: Vec<f64> = (0..dim).map(|_| rng.uniform() - 0.5).collect();
                for k in [1, 4] {
                    assert_eq!(tree.kth_dist2(&q, k, None), brute(&pts, dim, metric, &q, k, None));
                    let own = &pts[i * dim..(i + 1) * dim];
                    assert_eq!(tree.kth_dist2(own, k, Some(i)), brute(&pts, dim, metric, own, k, Some(i)));
                }
            }
        }
    }

    #[test]
    fn periodic_neighbors_cross_the_boundary() {
        let pts = [-0.49, 0.0, 0.3];
        let tree = KdTree::new(&pts, 1, Metric::Periodic);
        let d2 = tree.kth_dist2(&[0.49], 1, None);
        assert!((d2 - 0.02f64.powi(2)).abs() < 1e-15);
    }
}
