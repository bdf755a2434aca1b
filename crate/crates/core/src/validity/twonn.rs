//! Intrinsic dimension from the ratio of second to first neighbor distances.

use ndarray::ArrayView2;

use crate::distance::{knn_graph, Points};
use crate::error::{ensure, Error, Result};

/// Fraction of the largest ratios excluded from the likelihood.
pub const TRIM_FRACTION: f64 = 0.1;

const MIN_POINTS: usize = 10;

/// TWO-NN estimate of the intrinsic dimension of the rows of `x`.
///
/// With `μ_i = r2_i / r1_i` sorted ascending, the largest 10 % are treated as
/// right-censored at `μ_(M)`, giving the closed-form maximum likelihood
///
/// ```text
/// d = M / (Σ_{i≤M} ln μ_(i) + (N − M) ln μ_(M))
/// ```
///
/// Points with `r1 = 0` (exact duplicates) are dropped before estimation.
pub fn twonn_id(x: ArrayView2<'_, f64>) -> Result<f64> {
    ensure!(x.nrows() >= 3, "TWO-NN needs at least {MIN_POINTS} points");
    let x = x.as_standard_layout();
    let view = x.view();
    let g = knn_graph(&Points::new(&view), 2)?;
    let mut mu: Vec<f64> = (0..g.n())
        .filter_map(|i| {
            let d = g.distances(i);
            (d[0] > 0.0).then(|| d[1] / d[0])
        })
        .collect();
    ensure!(
        mu.len() >= MIN_POINTS,
        "TWO-NN needs at least {MIN_POINTS} points with a non-zero nearest neighbor, got {}",
        mu.len()
    );
    mu.sort_by(f64::total_cmp);
    let n = mu.len();
    let m = ((1.0 - TRIM_FRACTION) * n as f64).floor() as usize;
    let logs: f64 = mu[..m].iter().map(|v| v.ln()).sum();
    let censored = (n - m) as f64 * mu[m - 1].ln();
    let denom = logs + censored;
    if denom <= 0.0 {
        return Err(Error::Degenerate(
            "all neighbor-distance ratios are 1".into(),
        ));
    }
    Ok(m as f64 / denom)
}
