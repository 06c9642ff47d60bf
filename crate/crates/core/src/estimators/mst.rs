//! Friedman–Rafsky statistic from the Euclidean minimum spanning tree.

use crate::datasets::{LabeledDataset, Points};
use crate::error::{invalid, Result};
use crate::kdtree::sq_dist;

/// Edges of the Euclidean minimum spanning tree, by Prim's algorithm on the
/// complete graph. Ties go to the lower vertex index.
pub fn euclidean_mst(points: &Points) -> Vec<(usize, usize)> {
    let n = points.len();
    if n < 2 {
        return Vec::new();
    }
    let mut in_tree = vec![false; n];
    let mut key = vec![f64::INFINITY; n];
    let mut parent = vec![usize::MAX; n];
    let mut edges = Vec::with_capacity(n - 1);
    let mut current = 0;
    in_tree[0] = true;
    for _ in 1..n {
        let row = points.row(current);
        let mut best = usize::MAX;
        let mut best_key = f64::INFINITY;
        for v in 0..n {
            if in_tree[v] {
                continue;
            }
            let d = sq_dist(row, points.row(v));
            if d < key[v] {
                key[v] = d;
                parent[v] = current;
            }
            if key[v] < best_key || best == usize::MAX {
                best_key = key[v];
                best = v;
            }
        }
        in_tree[best] = true;
        edges.push((parent[best].min(best), parent[best].max(best)));
        current = best;
    }
    edges
}

/// Number of tree edges joining points of different classes.
pub fn cross_edge_count(labels: &[u8], edges: &[(usize, usize)]) -> usize {
    edges.iter().filter(|(a, b)| labels[*a] != labels[*b]).count()
}

/// `D_p` estimate `1 - R (N0 + N1) / (2 N0 N1)` from the cross-edge count `R`.
pub fn mst_dp_estimate(ds: &LabeledDataset) -> Result<f64> {
    let (n0, n1) = ds.class_counts();
    if n0 == 0 || n1 == 0 {
        return Err(invalid("both classes need at least one point"));
    }
    let edges = euclidean_mst(ds.points());
    let r = cross_edge_count(ds.labels(), &edges) as f64;
    let (n0, n1) = (n0 as f64, n1 as f64);
    Ok(1.0 - r * (n0 + n1) / (2.0 * n0 * n1))
}
