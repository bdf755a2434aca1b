use rand::Rng;

use crate::error::{ensure, Result};
use crate::rng::stage_rng;

/// Number of indices drawn for `fraction` of `n`, i.e. `ceil(fraction * n)`.
pub fn subsample_size(n: usize, fraction: f64) -> Result<usize> {
    ensure!(
        fraction > 0.0 && fraction <= 1.0,
        "subsample fraction must be in (0, 1], got {fraction}"
    );
    // Guard against products like 0.2 * 315770 landing one ulp above an integer.
    let m = ((fraction * n as f64) - 1e-9).ceil().max(0.0) as usize;
    Ok(m.min(n))
}

/// Uniform sample without replacement of `ceil(fraction * n)` row indices.
///
/// Partial Fisher–Yates over `0..n` driven by the `"subsample"` stage RNG:
/// for `i in 0..m`, swap position `i` with a uniform position in `i..n`.
/// The selected indices are returned sorted ascending.
pub fn subsample(n: usize, fraction: f64, seed: u64) -> Result<Vec<usize>> {
    let m = subsample_size(n, fraction)?;
    ensure!(m >= 2, "subsample of {n} rows at fraction {fraction} has fewer than 2 rows");
    let mut idx: Vec<usize> = (0..n).collect();
    if m < n {
        let mut rng = stage_rng(seed, "subsample");
        for i in 0..m {
            let j = rng.random_range(i..n);
            idx.swap(i, j);
        }
        idx.truncate(m);
        idx.sort_unstable();
    }
    Ok(idx)
}
