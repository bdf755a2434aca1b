//! UMAP-style neighbor embedding.
//!
//! The fuzzy simplicial set is built from smooth-kNN membership strengths,
//! symmetrized with the probabilistic t-conorm, and laid out by stochastic
//! gradient descent on the fuzzy cross-entropy with negative sampling. The
//! layout loop is single-threaded so a fixed seed gives bitwise-identical
//! output.

use nalgebra::{DMatrix, SymmetricEigen};
use ndarray::{Array2, ArrayView2};
use rand::{Rng, SeedableRng};
use rand_distr::{Distribution, Normal};

use super::pca::Pca;
use super::{EmbedParams, Embedding, MAX_EMBED_DIM};
use crate::distance::{knn_graph, Metric, NeighborGraph, Points};
use crate::error::{ensure, Error, Result};
use crate::repr::FeatureMatrix;
use crate::rng::stage_rng;

const SMOOTH_K_TOLERANCE: f64 = 1e-5;
const MIN_K_DIST_SCALE: f64 = 1e-3;
const INIT_EXTENT: f64 = 10.0;
const INIT_NOISE: f64 = 1e-4;
const GRAD_CLIP: f64 = 4.0;

/// Embeds the rows of `m` into `params.dim` dimensions.
pub fn neighbor_embed(m: &FeatureMatrix, params: &EmbedParams) -> Result<Embedding> {
    ensure!(
        params.dim >= 1 && params.dim <= m.f().min(MAX_EMBED_DIM),
        "embedding dimension {} must be in 1..={}",
        params.dim,
        m.f().min(MAX_EMBED_DIM)
    );
    let data = m.data();
    let points = Points::new(&data);
    check_not_degenerate(&points)?;
    let pca = Pca::fit(data, params.dim)?;
    let init = pca.transform(data);
    let coords = umap_layout(&points, init, params)?;
    Ok(Embedding {
        coords,
        params: Some(params.clone()),
    })
}

fn check_not_degenerate<M: Metric>(m: &M) -> Result<()> {
    let n = m.len();
    // Any point differing from point 0 means not all points coincide.
    if (1..n).all(|j| m.dist(0, j) == 0.0) {
        return Err(Error::Degenerate("all points are identical".into()));
    }
    Ok(())
}

/// Classical multidimensional scaling of a distance matrix into `dim` coordinates.
pub fn classical_mds(d: ArrayView2<'_, f64>, dim: usize) -> Array2<f64> {
    let n = d.nrows();
    let sq = d.mapv(|v| v * v);
    let row_means: Vec<f64> = (0..n).map(|i| sq.row(i).sum() / n as f64).collect();
    let grand = row_means.iter().sum::<f64>() / n as f64;
    let b = DMatrix::from_fn(n, n, |i, j| {
        -0.5 * (sq[[i, j]] - row_means[i] - row_means[j] + grand)
    });
    let eig = SymmetricEigen::new(b);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let mut out = Array2::zeros((n, dim));
    for (c, &col) in order.iter().take(dim).enumerate() {
        let scale = eig.eigenvalues[col].max(0.0).sqrt();
        let v = eig.eigenvectors.column(col);
        let pivot = v.iter().copied().fold(0.0f64, |acc, x| if x.abs() > acc.abs() { x } else { acc });
        let sign = if pivot < 0.0 { -1.0 } else { 1.0 };
        for i in 0..n {
            out[[i, c]] = sign * scale * v[i];
        }
    }
    out
}

/// Fits `a`, `b` of the low-dimensional similarity `1 / (1 + a d^(2b))` to the
/// target curve `1` for `d < min_dist`, `exp(-(d - min_dist) / spread)` beyond.
pub fn fit_ab(min_dist: f64, spread: f64) -> (f64, f64) {
    let xs: Vec<f64> = (0..300).map(|i| 3.0 * spread * i as f64 / 299.0).collect();
    let ys: Vec<f64> = xs
        .iter()
        .map(|&x| if x < min_dist { 1.0 } else { (-(x - min_dist) / spread).exp() })
        .collect();
    let sse = |a: f64, b: f64| -> f64 {
        xs.iter()
            .zip(&ys)
            .map(|(&x, &y)| {
                let r = 1.0 / (1.0 + a * x.powf(2.0 * b)) - y;
                r * r
            })
            .sum()
    };

    // Levenberg–Marquardt on the two parameters.
    let (mut a, mut b) = (1.0f64, 1.0f64);
    let mut damping = 1e-3;
    let mut cost = sse(a, b);
    for _ in 0..500 {
        let (mut jtj, mut jtr) = ([[0.0f64; 2]; 2], [0.0f64; 2]);
        for (&x, &y) in xs.iter().zip(&ys) {
            if x <= 0.0 {
                continue;
            }
            let p = x.powf(2.0 * b);
            let denom = 1.0 + a * p;
            let r = 1.0 / denom - y;
            let da = -p / (denom * denom);
            let db = -a * p * 2.0 * x.ln() / (denom * denom);
            jtj[0][0] += da * da;
            jtj[0][1] += da * db;
            jtj[1][1] += db * db;
            jtr[0] += da * r;
            jtr[1] += db * r;
        }
        jtj[1][0] = jtj[0][1];
        let m00 = jtj[0][0] * (1.0 + damping);
        let m11 = jtj[1][1] * (1.0 + damping);
        let det = m00 * m11 - jtj[0][1] * jtj[1][0];
        if det.abs() < f64::MIN_POSITIVE {
            break;
        }
        let step_a = -(m11 * jtr[0] - jtj[0][1] * jtr[1]) / det;
        let step_b = -(m00 * jtr[1] - jtj[1][0] * jtr[0]) / det;
        let (na, nb) = (a + step_a, b + step_b);
        if na > 0.0 && nb > 0.0 {
            let nc = sse(na, nb);
            if nc < cost {
                let improvement = cost - nc;
                a = na;
                b = nb;
                cost = nc;
                damping = (damping * 0.3).max(1e-12);
                if improvement < 1e-15 {
                    break;
                }
                continue;
            }
        }
        damping *= 10.0;
        if damping > 1e12 {
            break;
        }
    }
    (a, b)
}

/// Per-point `(rho, sigma)` such that the smoothed kNN memberships sum to `log2(k)`.
fn smooth_knn(g: &NeighborGraph) -> Vec<(f64, f64)> {
    let k = g.k();
    let target = (k as f64).log2();
    let n = g.n();
    let mean_all = (0..n).map(|i| g.distances(i).iter().sum::<f64>()).sum::<f64>() / (n * k) as f64;
    (0..n)
        .map(|i| {
            let dists = g.distances(i);
            let rho = dists.iter().copied().find(|&d| d > 0.0).unwrap_or(0.0);
            let (mut lo, mut hi, mut mid) = (0.0f64, f64::INFINITY, 1.0f64);
            for _ in 0..64 {
                let psum: f64 = dists
                    .iter()
                    .map(|&d| {
                        let gap = d - rho;
                        if gap > 0.0 {
                            (-gap / mid).exp()
                        } else {
                            1.0
                        }
                    })
                    .sum();
                if (psum - target).abs() < SMOOTH_K_TOLERANCE {
                    break;
                }
                if psum > target {
                    hi = mid;
                    mid = (lo + hi) / 2.0;
                } else {
                    lo = mid;
                    mid = if hi.is_infinite() { mid * 2.0 } else { (lo + hi) / 2.0 };
                }
            }
            let mean_i = dists.iter().sum::<f64>() / k as f64;
            let floor = if rho > 0.0 { mean_i } else { mean_all };
            (rho, mid.max(MIN_K_DIST_SCALE * floor))
        })
        .collect()
}

/// Symmetric fuzzy graph as a sorted COO list containing both `(i, j)` and `(j, i)`.
fn fuzzy_graph(g: &NeighborGraph) -> Vec<(usize, usize, f64)> {
    let params = smooth_knn(g);
    let mut directed: Vec<(usize, usize, f64)> = Vec::with_capacity(2 * g.n() * g.k());
    for i in 0..g.n() {
        let (rho, sigma) = params[i];
        for (&j, &d) in g.neighbors(i).iter().zip(g.distances(i)) {
            let w = if d - rho <= 0.0 { 1.0 } else { (-(d - rho) / sigma).exp() };
            directed.push((i, j, w));
        }
    }
    // Pair each directed weight with its transpose (0 when absent).
    let mut entries: Vec<(usize, usize, f64, bool)> = directed
        .iter()
        .flat_map(|&(i, j, w)| [(i, j, w, false), (j, i, w, true)])
        .collect();
    entries.sort_by_key(|x| (x.0, x.1, x.3));
    let mut out: Vec<(usize, usize, f64)> = Vec::with_capacity(entries.len());
    let mut idx = 0;
    while idx < entries.len() {
        let (i, j) = (entries[idx].0, entries[idx].1);
        let (mut fwd, mut bwd) = (0.0, 0.0);
        while idx < entries.len() && entries[idx].0 == i && entries[idx].1 == j {
            if entries[idx].3 {
                bwd = entries[idx].2;
            } else {
                fwd = entries[idx].2;
            }
            idx += 1;
        }
        let w = fwd + bwd - fwd * bwd;
        if w > 0.0 {
            out.push((i, j, w));
        }
    }
    out
}

/// Optimizes a layout of the points of `metric` starting from `init`.
///
/// `init` is rescaled to a fixed extent and jittered with seeded Gaussian noise
/// before optimization.
pub fn umap_layout<M: Metric + ?Sized>(
    metric: &M,
    init: Array2<f64>,
    params: &EmbedParams,
) -> Result<Array2<f64>> {
    let n = metric.len();
    ensure!(
        params.n_neighbors >= 1 && params.n_neighbors < n,
        "n_neighbors = {} must be in 1..{n}",
        params.n_neighbors
    );
    ensure!(init.nrows() == n, "initial layout has {} rows for {n} points", init.nrows());
    ensure!(params.min_dist >= 0.0 && params.spread > 0.0, "invalid min_dist/spread");
    let dim = init.ncols();

    let g = knn_graph(metric, params.n_neighbors)?;
    let mut edges = fuzzy_graph(&g);
    let max_w = edges.iter().map(|e| e.2).fold(0.0, f64::max);
    let epochs = params.epochs.max(1);
    edges.retain(|e| e.2 >= max_w / epochs as f64);

    let (a, b) = fit_ab(params.min_dist, params.spread);

    let mut rng = stage_rng(params.seed, "embed");
    let extent = init.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let scale = if extent > 0.0 { INIT_EXTENT / extent } else { 1.0 };
    let noise = Normal::new(0.0, INIT_NOISE).expect("valid normal");
    let mut y: Vec<f64> = init.iter().map(|v| v * scale + noise.sample(&mut rng)).collect();

    let eps_sample: Vec<f64> = edges.iter().map(|e| max_w / e.2).collect();
    let neg_rate = params.negative_sample_rate as f64;
    let eps_neg: Vec<f64> = eps_sample
        .iter()
        .map(|&e| if neg_rate > 0.0 { e / neg_rate } else { f64::INFINITY })
        .collect();
    let mut next_sample = eps_sample.clone();
    let mut next_neg = eps_neg.clone();

    // The sampler uses its own stream so that init noise does not shift it.
    let mut sampler = rand_chacha::ChaCha8Rng::seed_from_u64(rng.random());

    let mut cur = vec![0.0; dim];
    for epoch in 0..epochs {
        let alpha = 1.0 - epoch as f64 / epochs as f64;
        let epoch_f = epoch as f64;
        for (e, &(i, j, _)) in edges.iter().enumerate() {
            if next_sample[e] > epoch_f {
                continue;
            }
            let (ri, rj) = (i * dim, j * dim);
            let d2: f64 = (0..dim).map(|c| (y[ri + c] - y[rj + c]).powi(2)).sum();
            let coeff = if d2 > 0.0 {
                -2.0 * a * b * d2.powf(b - 1.0) / (a * d2.powf(b) + 1.0)
            } else {
                0.0
            };
            for c in 0..dim {
                let grad = (coeff * (y[ri + c] - y[rj + c])).clamp(-GRAD_CLIP, GRAD_CLIP) * alpha;
                y[ri + c] += grad;
                y[rj + c] -= grad;
            }
            next_sample[e] += eps_sample[e];

            let n_neg = ((epoch_f - next_neg[e]) / eps_neg[e]).floor().max(0.0) as usize;
            cur.copy_from_slice(&y[ri..ri + dim]);
            for _ in 0..n_neg {
                let k = sampler.random_range(0..n);
                if k == i {
                    continue;
                }
                let rk = k * dim;
                let d2: f64 = (0..dim).map(|c| (cur[c] - y[rk + c]).powi(2)).sum();
                let coeff = if d2 > 0.0 {
                    2.0 * b / ((0.001 + d2) * (a * d2.powf(b) + 1.0))
                } else {
                    0.0
                };
                for c in 0..dim {
                    let grad = if coeff > 0.0 {
                        (coeff * (cur[c] - y[rk + c])).clamp(-GRAD_CLIP, GRAD_CLIP)
                    } else {
                        GRAD_CLIP
                    };
                    cur[c] += grad * alpha;
                }
            }
            y[ri..ri + dim].copy_from_slice(&cur);
            next_neg[e] += n_neg as f64 * eps_neg[e];
        }
    }
    Ok(Array2::from_shape_vec((n, dim), y).expect("layout shape"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::repr::{Source, TokenKind};
    use ndarray::array;

    #[test]
    fn ab_matches_reference_curve() {
        // Reference fit for min_dist = 0.1, spread = 1.0: a ≈ 1.577, b ≈ 0.895.
        let (a, b) = fit_ab(0.1, 1.0);
        assert!((a - 1.577).abs() < 0.02, "a = {a}");
        assert!((b - 0.895).abs() < 0.01, "b = {b}");
    }

    #[test]
    fn mds_recovers_line() {
        let pts = [0.0f64, 1.0, 3.0, 6.0];
        let d = Array2::from_shape_fn((4, 4), |(i, j)| (pts[i] - pts[j]).abs());
        let x = classical_mds(d.view(), 1);
        for i in 0..4 {
            for j in 0..4 {
                assert!(((x[[i, 0]] - x[[j, 0]]).abs() - d[[i, j]]).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn identical_points_are_degenerate() {
        let m = FeatureMatrix::from_array(Array2::ones((20, 3)), Source::new("t", 1, TokenKind::Cls))
            .unwrap();
        let p = EmbedParams {
            dim: 2,
            n_neighbors: 5,
            ..EmbedParams::default()
        };
        assert!(matches!(neighbor_embed(&m, &p), Err(Error::Degenerate(_))));
    }

    #[test]
    fn fuzzy_graph_is_symmetric() {
        let x = array![[0.0], [1.0], [3.0], [3.5], [10.0]];
        let v = x.view();
        let g = knn_graph(&Points::new(&v), 2).unwrap();
        let e = fuzzy_graph(&g);
        for &(i, j, w) in &e {
            let back = e.iter().find(|t| t.0 == j && t.1 == i).expect("transpose");
            assert_eq!(back.2, w);
            assert!(w > 0.0 && w <= 1.0);
        }
    }

    #[test]
    fn rejects_dimension_above_input() {
        let m = FeatureMatrix::from_array(
            Array2::from_shape_fn((10, 3), |(i, j)| (i * 3 + j) as f64),
            Source::new("t", 1, TokenKind::Cls),
        )
        .unwrap();
        let p = EmbedParams {
            dim: 4,
            n_neighbors: 3,
            ..EmbedParams::default()
        };
        assert!(neighbor_embed(&m, &p).is_err());
    }
}
