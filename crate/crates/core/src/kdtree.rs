//! Exact k-d tree for nearest-neighbor queries.
//!
//! Candidates are ranked by `(squared distance, index)`, the same total order
//! used by the brute-force search, and subtrees are pruned only when their
//! plane distance strictly exceeds the current worst candidate. Results are
//! therefore identical to brute force, ties included.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::datasets::Points;

const LEAF_SIZE: usize = 16;

#[derive(Debug, Clone, Copy)]
pub(crate) struct Candidate {
    pub dist: f64,
    pub index: usize,
}

impl PartialEq for Candidate {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Candidate {}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        self.dist.total_cmp(&other.dist).then(self.index.cmp(&other.index))
    }
}

#[inline]
pub(crate) fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

enum Node {
    Leaf { start: usize, end: usize },
    Split { axis: usize, value: f64, left: usize, right: usize },
}

pub(crate) struct KdTree<'a> {
    points: &'a Points,
    order: Vec<usize>,
    nodes: Vec<Node>,
}

impl<'a> KdTree<'a> {
    pub fn build(points: &'a Points) -> Self {
        let mut tree = Self { points, order: (0..points.len()).collect(), nodes: Vec::new() };
        if !points.is_empty() {
            tree.build_node(0, points.len());
        }
        tree
    }

    fn build_node(&mut self, start: usize, end: usize) -> usize {
        let id = self.nodes.len();
        if end - start <= LEAF_SIZE {
            self.nodes.push(Node::Leaf { start, end });
            return id;
        }
        let d = self.points.dim();
        let axis = (0..d)
            .map(|a| {
                let (lo, hi) =
                    self.order[start..end].iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &i| {
                        let v = self.points.row(i)[a];
                        (lo.min(v), hi.max(v))
                    });
                (a, hi - lo)
            })
            .max_by(|x, y| x.1.total_cmp(&y.1))
            .map(|(a, _)| a)
            .unwrap_or(0);
        let mid = start + (end - start) / 2;
        let pts = self.points;
        self.order[start..end]
            .select_nth_unstable_by(mid - start, |&i, &j| pts.row(i)[axis].total_cmp(&pts.row(j)[axis]));
        let value = pts.row(self.order[mid])[axis];
        self.nodes.push(Node::Leaf { start: 0, end: 0 });
        let left = self.build_node(start, mid);
        let right = self.build_node(mid, end);
        self.nodes[id] = Node::Split { axis, value, left, right };
        id
    }

    /// The `m` nearest points to row `query`, excluding the row itself,
    /// sorted by `(distance, index)`.
    pub fn nearest_excluding_self(&self, query: usize, m: usize) -> Vec<Candidate> {
        let mut heap = BinaryHeap::with_capacity(m + 1);
        if m > 0 && !self.nodes.is_empty() {
            self.search(0, query, m, &mut heap);
        }
        heap.into_sorted_vec()
    }

    fn search(&self, node: usize, query: usize, m: usize, heap: &mut BinaryHeap<Candidate>) {
        let q = self.points.row(query);
        match self.nodes[node] {
            Node::Leaf { start, end } => {
                for &i in &self.order[start..end] {
                    if i == query {
                        continue;
                    }
                    let c = Candidate { dist: sq_dist(q, self.points.row(i)), index: i };
                    if heap.len() < m {
                        heap.push(c);
                    } else if c < *heap.peek().expect("heap is full") {
                        heap.pop();
                        heap.push(c);
                    }
                }
            }
            Node::Split { axis, value, left, right } => {
                let diff = q[axis] - value;
                let (near, far) = if diff < 0.0 { (left, right) } else { (right, left) };
                self.search(near, query, m, heap);
                let bound = diff * diff;
                if heap.len() < m || bound <= heap.peek().expect("heap is full").dist {
                    self.search(far, query, m, heap);
                }
            }
        }
    }
}
