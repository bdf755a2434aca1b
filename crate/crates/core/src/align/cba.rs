//! Fuzzy Rand distance between soft clusterings.
//!
//! Memberships are quantized to integer multiples of `2^-52` once, after which
//! every pair term and every sum is exact integer arithmetic. The result is
//! therefore identical for any block size, worker count or schedule, and
//! differs from a plain floating-point evaluation by at most `k · 2^-52` per
//! pair term.

use ndarray::{Array2, ArrayView1, ArrayView2};

use crate::error::{ensure, Error, Result};
use crate::par;
use crate::repr::clustering::ROW_SUM_TOLERANCE;

/// Fixed-point resolution of quantized memberships.
pub const QUANT_BITS: i32 = 52;

/// Default number of rows per block in the pair loop.
pub const DEFAULT_BLOCK: usize = 256;

/// Largest block size for which per-row partial sums fit in `i64`.
pub const MAX_BLOCK: usize = 512;

const SCALE: f64 = (1u64 << QUANT_BITS) as f64;

/// `d_ms(p, q) = 1 − ½‖p − q‖₁` for two membership vectors of one clustering.
pub fn membership_distance(p: &[f64], q: &[f64]) -> Result<f64> {
    ensure!(p.len() == q.len(), "membership vectors differ in length");
    for v in p.iter().chain(q) {
        ensure!((0.0..=1.0).contains(v), "membership {v} outside [0, 1]");
    }
    let l1: f64 = p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum();
    Ok(1.0 - 0.5 * l1)
}

/// Sampled rows of a membership matrix, quantized, row-major.
struct Quantized {
    n: usize,
    k: usize,
    data: Vec<i64>,
}

impl Quantized {
    fn row(&self, i: usize) -> &[i64] {
        &self.data[i * self.k..(i + 1) * self.k]
    }
}

fn check_sample(n: usize, sample: &[usize]) -> Result<()> {
    ensure!(sample.len() >= 2, "sample needs at least 2 points, got {}", sample.len());
    let mut seen = vec![false; n];
    for &i in sample {
        ensure!(i < n, "sample index {i} out of range for {n} points");
        ensure!(!seen[i], "sample index {i} repeated");
        seen[i] = true;
    }
    Ok(())
}

fn quantize(m: ArrayView2<'_, f64>, sample: &[usize]) -> Result<Quantized> {
    let k = m.ncols();
    ensure!(k >= 1, "membership matrix has no columns");
    let mut data = Vec::with_capacity(sample.len() * k);
    for &i in sample {
        let row = m.row(i);
        let mut sum = 0.0;
        for &v in row {
            ensure!((0.0..=1.0).contains(&v), "membership {v} outside [0, 1] in row {i}");
            sum += v;
            data.push((v * SCALE).round() as i64);
        }
        ensure!(
            sum <= 1.0 + ROW_SUM_TOLERANCE,
            "membership row {i} sums to {sum}"
        );
    }
    Ok(Quantized {
        n: sample.len(),
        k,
        data,
    })
}

fn prepare(
    p: ArrayView2<'_, f64>,
    q: ArrayView2<'_, f64>,
    sample: &[usize],
) -> Result<(Quantized, Quantized)> {
    if p.nrows() != q.nrows() {
        return Err(Error::SizeMismatch(format!(
            "clusterings cover {} and {} points",
            p.nrows(),
            q.nrows()
        )));
    }
    check_sample(p.nrows(), sample)?;
    Ok((quantize(p, sample)?, quantize(q, sample)?))
}

fn blocks(n: usize, block: usize) -> Vec<(usize, usize)> {
    let nb = n.div_ceil(block);
    (0..nb).flat_map(|a| (a..nb).map(move |b| (a, b))).collect()
}

#[inline]
fn l1(a: &[i64], b: &[i64]) -> i64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum()
}

fn pair_count(n: usize) -> f64 {
    n as f64 * (n as f64 - 1.0) / 2.0
}

/// Exact sum over sampled pairs `i < j` of `|‖P_i − P_j‖₁ − ‖Q_i − Q_j‖₁|`,
/// in units of `2^-52`.
fn cross_sum(p: &Quantized, q: &Quantized, block: usize) -> i128 {
    let n = p.n;
    let tasks = blocks(n, block);
    let partial = par::map_slice(&tasks, |&(a, b)| {
        let (i0, i1) = (a * block, ((a + 1) * block).min(n));
        let (j0, j1) = (b * block, ((b + 1) * block).min(n));
        let mut total = 0i128;
        for i in i0..i1 {
            let (pi, qi) = (p.row(i), q.row(i));
            let mut row = 0i64;
            for j in j0.max(i + 1)..j1 {
                row += (l1(pi, p.row(j)) - l1(qi, q.row(j))).abs();
            }
            total += row as i128;
        }
        total
    });
    partial.into_iter().sum()
}

/// `d_cross(P, Q)` over the sampled points, with an explicit block size.
pub fn cross_distance_blocked(
    p: ArrayView2<'_, f64>,
    q: ArrayView2<'_, f64>,
    sample: &[usize],
    block: usize,
) -> Result<f64> {
    ensure!(
        (1..=MAX_BLOCK).contains(&block),
        "block size must be in 1..={MAX_BLOCK}"
    );
    let (qp, qq) = prepare(p, q, sample)?;
    let total = cross_sum(&qp, &qq, block);
    Ok(total as f64 / (2.0 * SCALE) / pair_count(qp.n))
}

/// `d_cross(P, Q) = mean_{i<j} |d_ms(P_i, P_j) − d_ms(Q_i, Q_j)|` over the
/// sampled points.
pub fn cross_distance(p: ArrayView2<'_, f64>, q: ArrayView2<'_, f64>, sample: &[usize]) -> Result<f64> {
    cross_distance_blocked(p, q, sample, DEFAULT_BLOCK)
}

/// Concept-based alignment, `1 − d_cross`.
pub fn cba(p: ArrayView2<'_, f64>, q: ArrayView2<'_, f64>, sample: &[usize]) -> Result<f64> {
    Ok(1.0 - cross_distance(p, q, sample)?)
}

/// Per-concept-pair distance between column `P^α` and column `Q^β`:
/// `mean_{i<j} | |P^α_i − P^α_j| − |Q^β_i − Q^β_j| |`.
pub fn concept_pair_distance(
    p: ArrayView1<'_, f64>,
    q: ArrayView1<'_, f64>,
    sample: &[usize],
) -> Result<f64> {
    let p = p.insert_axis(ndarray::Axis(1));
    let q = q.insert_axis(ndarray::Axis(1));
    let (qp, qq) = prepare_columns(p, q, sample)?;
    let m = pair_matrix_sum(&qp, &qq, DEFAULT_BLOCK);
    Ok(m[0] as f64 / SCALE / pair_count(qp.n))
}

/// Columns are checked for range only; row sums do not apply to a single concept.
fn prepare_columns(
    p: ArrayView2<'_, f64>,
    q: ArrayView2<'_, f64>,
    sample: &[usize],
) -> Result<(Quantized, Quantized)> {
    if p.nrows() != q.nrows() {
        return Err(Error::SizeMismatch(format!(
            "columns cover {} and {} points",
            p.nrows(),
            q.nrows()
        )));
    }
    check_sample(p.nrows(), sample)?;
    let col = |m: ArrayView2<'_, f64>| -> Result<Quantized> {
        let mut data = Vec::with_capacity(sample.len());
        for &i in sample {
            let v = m[[i, 0]];
            ensure!((0.0..=1.0).contains(&v), "membership {v} outside [0, 1] in row {i}");
            data.push((v * SCALE).round() as i64);
        }
        Ok(Quantized {
            n: sample.len(),
            k: 1,
            data,
        })
    };
    Ok((col(p)?, col(q)?))
}

fn pair_matrix_sum(p: &Quantized, q: &Quantized, block: usize) -> Vec<i128> {
    let (n, kp, kq) = (p.n, p.k, q.k);
    let tasks = blocks(n, block);
    let partial = par::map_slice(&tasks, |&(a, b)| {
        let (i0, i1) = (a * block, ((a + 1) * block).min(n));
        let (j0, j1) = (b * block, ((b + 1) * block).min(n));
        let mut total = vec![0i128; kp * kq];
        let mut row = vec![0i64; kp * kq];
        let mut gp = vec![0i64; kp];
        let mut gq = vec![0i64; kq];
        for i in i0..i1 {
            row.iter_mut().for_each(|v| *v = 0);
            let (pi, qi) = (p.row(i), q.row(i));
            for j in j0.max(i + 1)..j1 {
                for (g, (x, y)) in gp.iter_mut().zip(pi.iter().zip(p.row(j))) {
                    *g = (x - y).abs();
                }
                for (g, (x, y)) in gq.iter_mut().zip(qi.iter().zip(q.row(j))) {
                    *g = (x - y).abs();
                }
                for (alpha, &ga) in gp.iter().enumerate() {
                    let out = &mut row[alpha * kq..(alpha + 1) * kq];
                    for (o, &gb) in out.iter_mut().zip(&gq) {
                        *o += (ga - gb).abs();
                    }
                }
            }
            for (t, &r) in total.iter_mut().zip(&row) {
                *t += r as i128;
            }
        }
        total
    });
    let mut sum = vec![0i128; kp * kq];
    for part in partial {
        for (s, v) in sum.iter_mut().zip(part) {
            *s += v;
        }
    }
    sum
}

/// All per-concept-pair distances, `k_P × k_Q`.
pub fn concept_pair_matrix(
    p: ArrayView2<'_, f64>,
    q: ArrayView2<'_, f64>,
    sample: &[usize],
) -> Result<Array2<f64>> {
    let (qp, qq) = prepare(p, q, sample)?;
    let sum = pair_matrix_sum(&qp, &qq, DEFAULT_BLOCK);
    let denom = SCALE * pair_count(qp.n);
    Ok(Array2::from_shape_fn((qp.k, qq.k), |(a, b)| {
        sum[a * qq.k + b] as f64 / denom
    }))
}

/// One-hot memberships for a crisp labeling.
pub fn crisp_to_membership(labels: &[i64]) -> Result<Array2<f64>> {
    ensure!(!labels.is_empty(), "empty labeling");
    if let Some(l) = labels.iter().find(|&&l| l < 0) {
        return Err(Error::Validation(format!("negative label {l}")));
    }
    let k = *labels.iter().max().expect("non-empty") as usize + 1;
    let mut m = Array2::zeros((labels.len(), k));
    for (i, &l) in labels.iter().enumerate() {
        m[[i, l as usize]] = 1.0;
    }
    Ok(m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use proptest::prelude::*;

    fn all(n: usize) -> Vec<usize> {
        (0..n).collect()
    }

    fn naive(p: &Array2<f64>, q: &Array2<f64>) -> f64 {
        let n = p.nrows();
        let mut s = 0.0;
        for i in 0..n {
            for j in i + 1..n {
                let dp = membership_distance(p.row(i).as_slice().unwrap(), p.row(j).as_slice().unwrap()).unwrap();
                let dq = membership_distance(q.row(i).as_slice().unwrap(), q.row(j).as_slice().unwrap()).unwrap();
                s += (dp - dq).abs();
            }
        }
        s / (n * (n - 1) / 2) as f64
    }

    fn fuzzy(n: usize, k: usize, vals: &[f64]) -> Array2<f64> {
        Array2::from_shape_fn((n, k), |(i, a)| vals[(i * k + a) % vals.len()] / k as f64)
    }

    #[test]
    fn membership_distance_examples() {
        assert_eq!(membership_distance(&[0.3, 0.2], &[0.3, 0.2]).unwrap(), 1.0);
        assert_eq!(membership_distance(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 0.0);
        assert_eq!(membership_distance(&[0.5, 0.5], &[1.0, 0.0]).unwrap(), 0.5);
        assert!(membership_distance(&[1.5], &[0.0]).is_err());
    }

    #[test]
    fn crisp_three_points() {
        let p = crisp_to_membership(&[0, 0, 1]).unwrap();
        let q = crisp_to_membership(&[0, 1, 1]).unwrap();
        assert!((cba(p.view(), q.view(), &all(3)).unwrap() - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn crisp_conversion() {
        assert_eq!(
            crisp_to_membership(&[0, 0, 1]).unwrap(),
            array![[1.0, 0.0], [1.0, 0.0], [0.0, 1.0]]
        );
        assert_eq!(crisp_to_membership(&[2, 2]).unwrap().ncols(), 3);
        assert_eq!(crisp_to_membership(&[0, 0]).unwrap(), array![[1.0], [1.0]]);
        assert!(crisp_to_membership(&[0, -1]).is_err());
    }

    #[test]
    fn pair_distance_hand_case() {
        let p = array![1.0, 0.0, 0.0];
        let q = array![0.0, 0.0, 0.0];
        let d = concept_pair_distance(p.view(), q.view(), &all(3)).unwrap();
        assert!((d - 2.0 / 3.0).abs() < 1e-15);
        let c = array![0.4, 0.4, 0.4];
        let c2 = array![0.7, 0.7, 0.7];
        assert_eq!(concept_pair_distance(c.view(), c2.view(), &all(3)).unwrap(), 0.0);
    }

    #[test]
    fn single_concept_matrix_matches_pair_distance() {
        let p = array![[0.1], [0.9], [0.4], [0.0]];
        let q = array![[0.5], [0.2], [1.0], [0.3]];
        let m = concept_pair_matrix(p.view(), q.view(), &all(4)).unwrap();
        let d = concept_pair_distance(p.column(0), q.column(0), &all(4)).unwrap();
        assert_eq!(m.dim(), (1, 1));
        assert_eq!(m[[0, 0]], d);
    }

    #[test]
    fn upper_bound_can_fail_for_unequal_concept_counts() {
        let p = array![[1.0, 0.0], [0.0, 1.0]];
        let q = array![[1.0], [0.0]];
        let s = all(2);
        let d = cross_distance(p.view(), q.view(), &s).unwrap();
        let sum = concept_pair_matrix(p.view(), q.view(), &s).unwrap().sum();
        assert_eq!(d, 0.5);
        assert_eq!(sum, 0.0);
    }

    #[test]
    fn sample_errors() {
        let p = array![[1.0], [1.0], [1.0]];
        assert!(cba(p.view(), p.view(), &[0]).is_err());
        assert!(cba(p.view(), p.view(), &[0, 0]).is_err());
        assert!(cba(p.view(), p.view(), &[0, 3]).is_err());
        let q = array![[1.0], [1.0]];
        assert!(matches!(cba(p.view(), q.view(), &[0, 1]), Err(Error::SizeMismatch(_))));
        let bad = array![[0.7, 0.7], [0.0, 0.0], [0.0, 0.0]];
        assert!(cba(bad.view(), bad.view(), &[0, 1]).is_err());
    }

    #[test]
    fn sample_restricts_points() {
        let p = crisp_to_membership(&[0, 0, 1, 1]).unwrap();
        let q = crisp_to_membership(&[0, 1, 1, 0]).unwrap();
        assert_eq!(cba(p.view(), q.view(), &[0, 2]).unwrap(), 1.0);
        assert_eq!(cba(p.view(), q.view(), &[0, 1]).unwrap(), 0.0);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn matches_naive_and_any_block(
            n in 2usize..60,
            kp in 1usize..5,
            kq in 1usize..5,
            vals in prop::collection::vec(0.0f64..1.0, 16..64),
            block in 1usize..40,
        ) {
            let p = fuzzy(n, kp, &vals);
            let q = fuzzy(n, kq, &vals[3..]);
            let s = all(n);
            let a = cross_distance(p.view(), q.view(), &s).unwrap();
            let b = cross_distance_blocked(p.view(), q.view(), &s, block).unwrap();
            prop_assert_eq!(a.to_bits(), b.to_bits());
            prop_assert!((a - naive(&p, &q)).abs() < 1e-12);
        }

        #[test]
        fn concept_permutation_invariant(
            n in 2usize..40,
            vals in prop::collection::vec(0.0f64..1.0, 16..64),
            shift in 1usize..4,
        ) {
            let p = fuzzy(n, 4, &vals);
            let q = fuzzy(n, 3, &vals[5..]);
            let mut perm = p.clone();
            for a in 0..4 {
                perm.column_mut(a).assign(&p.column((a + shift) % 4));
            }
            let s = all(n);
            prop_assert_eq!(
                cba(p.view(), q.view(), &s).unwrap().to_bits(),
                cba(perm.view(), q.view(), &s).unwrap().to_bits()
            );
        }

        #[test]
        fn pair_matrix_nonnegative_and_symmetric(
            n in 2usize..30,
            vals in prop::collection::vec(0.0f64..1.0, 16..64),
        ) {
            let p = fuzzy(n, 3, &vals);
            let q = fuzzy(n, 2, &vals[7..]);
            let s = all(n);
            let pq = concept_pair_matrix(p.view(), q.view(), &s).unwrap();
            let qp = concept_pair_matrix(q.view(), p.view(), &s).unwrap();
            prop_assert!(pq.iter().all(|&v| v >= 0.0));
            prop_assert_eq!(pq.t().to_owned(), qp);
        }
    }
}
