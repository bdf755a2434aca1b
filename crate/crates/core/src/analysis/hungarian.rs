use ndarray::ArrayView2;

use crate::error::{ensure, Result};

/// Optimal cost of matching `min(|rows|, |cols|)` pairs between the given
/// rows and columns of `cost`, and the matching itself.
fn solve(cost: ArrayView2<'_, f64>, rows: &[usize], cols: &[usize]) -> (f64, Vec<(usize, usize)>) {
    if rows.is_empty() || cols.is_empty() {
        return (0.0, Vec::new());
    }
    let transposed = rows.len() > cols.len();
    let (r, c) = if transposed { (cols, rows) } else { (rows, cols) };
    let at = |i: usize, j: usize| {
        if transposed {
            cost[[c[j], r[i]]]
        } else {
            cost[[r[i], c[j]]]
        }
    };
    let (n, m) = (r.len(), c.len());
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; m + 1];
    let mut p = vec![0usize; m + 1];
    let mut way = vec![0usize; m + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; m + 1];
        let mut used = vec![false; m + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=m {
                if used[j] {
                    continue;
                }
                let cur = at(i0 - 1, j - 1) - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=m {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut pairs = Vec::with_capacity(n);
    let mut total = 0.0;
    for j in 1..=m {
        if p[j] != 0 {
            let (i, jj) = (p[j] - 1, j - 1);
            total += at(i, jj);
            pairs.push(if transposed { (c[jj], r[i]) } else { (r[i], c[jj]) });
        }
    }
    pairs.sort_unstable();
    (total, pairs)
}

/// Minimum-cost matching of `min(k_P, k_Q)` concept pairs.
///
/// Among optimal matchings the lexicographically smallest list of `(α, β)`
/// pairs is returned. Surplus concepts on the larger side stay unmatched.
pub fn hungarian_match(cost: ArrayView2<'_, f64>) -> Result<Vec<(usize, usize)>> {
    let (kp, kq) = cost.dim();
    ensure!(kp > 0 && kq > 0, "cost matrix is empty");
    ensure!(cost.iter().all(|v| v.is_finite()), "cost matrix has non-finite entries");
    let all_rows: Vec<usize> = (0..kp).collect();
    let all_cols: Vec<usize> = (0..kq).collect();
    let (opt, first) = solve(cost, &all_rows, &all_cols);
    let scale: f64 = cost.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    let tol = 1e-12 * scale * kp.max(kq) as f64;

    let mut rows: Vec<usize> = all_rows;
    let mut cols: Vec<usize> = all_cols;
    let mut fixed = 0.0;
    let mut out = Vec::with_capacity(kp.min(kq));
    for alpha in 0..kp {
        rows.retain(|&r| r != alpha);
        let mut chosen = None;
        for &beta in &cols {
            let rest: Vec<usize> = cols.iter().copied().filter(|&c| c != beta).collect();
            let (sub, _) = solve(cost, &rows, &rest);
            if fixed + cost[[alpha, beta]] + sub <= opt + tol {
                chosen = Some(beta);
                break;
            }
        }
        match chosen {
            Some(beta) => {
                fixed += cost[[alpha, beta]];
                cols.retain(|&c| c != beta);
                out.push((alpha, beta));
            }
            None => {
                if cols.is_empty() {
                    break;
                }
            }
        }
    }
    if out.len() != kp.min(kq) {
        // Tolerance mishap; fall back to the plain optimum.
        return Ok(first);
    }
    Ok(out)
}

/// Total cost of a matching.
pub fn matching_cost(cost: ArrayView2<'_, f64>, pairs: &[(usize, usize)]) -> f64 {
    pairs.iter().map(|&(a, b)| cost[[a, b]]).sum()
}
