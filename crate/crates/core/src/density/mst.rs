use std::cmp::Ordering;

use crate::distance::Metric;
use crate::error::{ensure, Result};

/// Undirected weighted edge with `a < b`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge {
    pub a: usize,
    pub b: usize,
    pub weight: f64,
}

impl Edge {
    fn new(u: usize, v: usize, weight: f64) -> Self {
        Self {
            a: u.min(v),
            b: u.max(v),
            weight,
        }
    }

    fn key_cmp(&self, other: &Edge) -> Ordering {
        self.weight
            .total_cmp(&other.weight)
            .then(self.a.cmp(&other.a))
            .then(self.b.cmp(&other.b))
    }
}

/// Minimum spanning tree of the complete graph over `w`, using dense Prim.
///
/// Runs in O(n²) time and O(n) memory, evaluating each weight once. Ties are
/// broken by `(weight, smaller endpoint, larger endpoint)`. The returned edges
/// are sorted by the same key.
pub fn minimum_spanning_tree<M: Metric + ?Sized>(w: &M) -> Result<Vec<Edge>> {
    let n = w.len();
    ensure!(n >= 2, "minimum spanning tree needs at least 2 points, got {n}");

    let mut in_tree = vec![false; n];
    let mut best: Vec<Edge> = (0..n)
        .map(|v| Edge {
            a: v,
            b: v,
            weight: f64::INFINITY,
        })
        .collect();
    let mut edges = Vec::with_capacity(n - 1);
    let mut current = 0usize;
    in_tree[0] = true;

    for _ in 1..n {
        let mut next: Option<usize> = None;
        for v in 0..n {
            if in_tree[v] {
                continue;
            }
            let cand = Edge::new(current, v, w.dist(current, v));
            if cand.key_cmp(&best[v]) == Ordering::Less {
                best[v] = cand;
            }
            if next.is_none_or(|u| best[v].key_cmp(&best[u]) == Ordering::Less) {
                next = Some(v);
            }
        }
        let v = next.expect("graph has unvisited vertices");
        in_tree[v] = true;
        edges.push(best[v]);
        current = v;
    }
    edges.sort_by(Edge::key_cmp);
    Ok(edges)
}
