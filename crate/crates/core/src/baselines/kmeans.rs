use ndarray::{Array2, ArrayView2};
use rand::Rng;

use super::{normalize_rows, SCORE_EPS};
use crate::distance::{euclidean, sq_euclidean};
use crate::error::{ensure, Error, Result};
use crate::par;
use crate::repr::SoftClustering;
use crate::rng::stage_rng;

pub const MAX_ITER: usize = 300;

#[derive(Debug, Clone, PartialEq)]
pub struct KMeans {
    /// `k × f` centroids.
    pub centroids: Array2<f64>,
    pub labels: Vec<usize>,
    pub iterations: usize,
}

fn nearest(row: &[f64], centroids: &[f64], f: usize) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (c, centroid) in centroids.chunks_exact(f).enumerate() {
        let d = sq_euclidean(row, centroid);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

fn plus_plus(x: &[f64], n: usize, f: usize, k: usize, seed: u64) -> Vec<f64> {
    let mut rng = stage_rng(seed, "kmeans");
    let mut centroids = Vec::with_capacity(k * f);
    let first = rng.random_range(0..n);
    centroids.extend_from_slice(&x[first * f..(first + 1) * f]);
    let mut d2: Vec<f64> = (0..n)
        .map(|i| sq_euclidean(&x[i * f..(i + 1) * f], &centroids[..f]))
        .collect();
    for _ in 1..k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut chosen = n - 1;
            for (i, &d) in d2.iter().enumerate() {
                if target < d {
                    chosen = i;
                    break;
                }
                target -= d;
            }
            chosen
        } else {
            rng.random_range(0..n)
        };
        let row = &x[pick * f..(pick + 1) * f];
        centroids.extend_from_slice(row);
        for (i, d) in d2.iter_mut().enumerate() {
            *d = d.min(sq_euclidean(&x[i * f..(i + 1) * f], row));
        }
    }
    centroids
}

/// Lloyd iterations from k-means++ seeds, until the assignment stops changing
/// or `MAX_ITER` rounds. An emptied cluster takes the point of the largest
/// cluster farthest from that cluster's centroid.
pub fn kmeans(x: ArrayView2<'_, f64>, k: usize, seed: u64) -> Result<KMeans> {
    let (n, f) = x.dim();
    ensure!(k >= 1, "k must be >= 1");
    if k > n {
        return Err(Error::Validation(format!("k = {k} exceeds {n} points")));
    }
    let x = x.as_standard_layout();
    let data = x.as_slice().expect("standard layout");
    let mut centroids = plus_plus(data, n, f, k, seed);
    let mut labels = vec![usize::MAX; n];
    let mut iterations = 0;
    for _ in 0..MAX_ITER {
        iterations += 1;
        let next = par::map_range(n, |i| nearest(&data[i * f..(i + 1) * f], &centroids, f).0);
        let mut next = next;
        let mut counts = vec![0usize; k];
        for &l in &next {
            counts[l] += 1;
        }
        for c in 0..k {
            if counts[c] > 0 {
                continue;
            }
            let largest = (0..k).max_by(|&a, &b| counts[a].cmp(&counts[b]).then(b.cmp(&a))).expect("k >= 1");
            let centroid = &centroids[largest * f..(largest + 1) * f];
            let far = (0..n)
                .filter(|&i| next[i] == largest)
                .max_by(|&a, &b| {
                    sq_euclidean(&data[a * f..(a + 1) * f], centroid)
                        .total_cmp(&sq_euclidean(&data[b * f..(b + 1) * f], centroid))
                        .then(b.cmp(&a))
                })
                .expect("largest cluster is non-empty");
            next[far] = c;
            counts[largest] -= 1;
            counts[c] += 1;
        }
        let changed = next != labels;
        labels = next;
        let mut sums = vec![0.0; k * f];
        for (i, &l) in labels.iter().enumerate() {
            for j in 0..f {
                sums[l * f + j] += data[i * f + j];
            }
        }
        for c in 0..k {
            for j in 0..f {
                centroids[c * f + j] = sums[c * f + j] / counts[c] as f64;
            }
        }
        if !changed {
            break;
        }
    }
    Ok(KMeans {
        centroids: Array2::from_shape_vec((k, f), centroids).expect("shape"),
        labels,
        iterations,
    })
}

/// Concepts as k-means centroids: score `1 / (d(φ, c_α) + ε)`, normalized per row.
pub fn kmeans_concepts(x: ArrayView2<'_, f64>, k: usize, seed: u64) -> Result<SoftClustering> {
    let km = kmeans(x, k, seed)?;
    let x = x.as_standard_layout();
    let f = x.ncols();
    let cents = km.centroids.as_slice().expect("standard layout");
    let rows = par::map_range(x.nrows(), |i| {
        let row = x.row(i);
        let row = row.as_slice().expect("standard layout");
        cents
            .chunks_exact(f)
            .map(|c| 1.0 / (euclidean(row, c) + SCORE_EPS))
            .collect::<Vec<f64>>()
    });
    let scores = Array2::from_shape_vec((x.nrows(), k), rows.concat()).expect("shape");
    let labels = km.labels.iter().map(|&l| l as i32).collect();
    SoftClustering::new(normalize_rows(scores), labels, None, seed, "kmeans")
}
