//! Euclidean distances and exact k-nearest-neighbor graphs.

use ndarray::ArrayView2;

use crate::error::{ensure, Error, Result};
use crate::par;

#[inline]
pub fn sq_euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

#[inline]
pub fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    sq_euclidean(a, b).sqrt()
}

/// A finite point set with a symmetric distance.
pub trait Metric: Sync {
    fn len(&self) -> usize;
    fn dist(&self, i: usize, j: usize) -> f64;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Row vectors of a dense matrix under the Euclidean distance.
#[derive(Debug, Clone)]
pub struct Points<'a> {
    data: &'a [f64],
    dim: usize,
}

impl<'a> Points<'a> {
    /// Panics if the view is not in standard (row-major, contiguous) layout.
    pub fn new(x: &'a ArrayView2<'a, f64>) -> Self {
        Self {
            data: x.as_slice().expect("row-major contiguous matrix"),
            dim: x.ncols(),
        }
    }

    pub fn from_slice(data: &'a [f64], dim: usize) -> Self {
        assert!(dim > 0 && data.len().is_multiple_of(dim));
        Self { data, dim }
    }

    #[inline]
    pub fn row(&self, i: usize) -> &'a [f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn dim(&self) -> usize {
        self.dim
    }
}

impl Metric for Points<'_> {
    fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    #[inline]
    fn dist(&self, i: usize, j: usize) -> f64 {
        euclidean(self.row(i), self.row(j))
    }
}

/// A precomputed symmetric distance matrix.
#[derive(Debug, Clone)]
pub struct Precomputed<'a> {
    d: ArrayView2<'a, f64>,
}

impl<'a> Precomputed<'a> {
    pub fn new(d: ArrayView2<'a, f64>) -> Result<Self> {
        let (r, c) = d.dim();
        ensure!(r == c, "distance matrix must be square, got {r}x{c}");
        for i in 0..r {
            for j in 0..r {
                let v = d[[i, j]];
                ensure!(v.is_finite() && v >= 0.0, "distance ({i},{j}) = {v} is invalid");
                ensure!(
                    (v - d[[j, i]]).abs() <= 1e-9 * v.abs().max(1.0),
                    "distance matrix is not symmetric at ({i},{j})"
                );
            }
        }
        Ok(Self { d })
    }
}

impl Metric for Precomputed<'_> {
    fn len(&self) -> usize {
        self.d.nrows()
    }

    #[inline]
    fn dist(&self, i: usize, j: usize) -> f64 {
        self.d[[i, j]]
    }
}

/// k nearest neighbors of every point, self excluded, ascending by distance.
#[derive(Debug, Clone, PartialEq)]
pub struct NeighborGraph {
    k: usize,
    indices: Vec<usize>,
    distances: Vec<f64>,
}

impl NeighborGraph {
    pub fn n(&self) -> usize {
        self.indices.len().checked_div(self.k).unwrap_or(0)
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.indices[i * self.k..(i + 1) * self.k]
    }

    pub fn distances(&self, i: usize) -> &[f64] {
        &self.distances[i * self.k..(i + 1) * self.k]
    }

    /// Distance from `i` to its `j`-th nearest neighbor (1-based).
    pub fn kth_distance(&self, i: usize, j: usize) -> f64 {
        self.distances(i)[j - 1]
    }
}

/// Exact kNN by brute force. Ties are broken by the smaller point index.
pub fn knn_graph<M: Metric + ?Sized>(m: &M, k: usize) -> Result<NeighborGraph> {
    let n = m.len();
    if k == 0 || k >= n {
        return Err(Error::Validation(format!(
            "k = {k} neighbors requires 1 <= k < n = {n}"
        )));
    }
    let rows = par::map_range(n, |i| {
        let mut cand: Vec<(f64, usize)> = (0..n)
            .filter(|&j| j != i)
            .map(|j| (m.dist(i, j), j))
            .collect();
        let cmp = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
        if k < cand.len() {
            cand.select_nth_unstable_by(k - 1, cmp);
            cand.truncate(k);
        }
        cand.sort_unstable_by(cmp);
        cand
    });
    let mut indices = Vec::with_capacity(n * k);
    let mut distances = Vec::with_capacity(n * k);
    for row in rows {
        for (d, j) in row {
            indices.push(j);
            distances.push(d);
        }
    }
    Ok(NeighborGraph {
        k,
        indices,
        distances,
    })
}
