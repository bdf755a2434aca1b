use ndarray::{Array2, ArrayView2};

use super::tree::{CondensedTree, LeafClustering};
use crate::distance::euclidean;
use crate::error::{ensure, Error, Result};
use crate::par;
use crate::repr::{LambdaStats, SoftClustering};

/// Added to exemplar distances before inversion.
pub const DIST_EPS: f64 = 1e-12;

/// Relative tolerance for a point's persistence to count as the leaf maximum.
const EXEMPLAR_RTOL: f64 = 1e-9;

/// Recorded in clustering reports whenever soft memberships are computed.
pub const LAMBDA_PROXY_NOTE: &str = "persistence of a point towards a cluster it is not a member of \
     is approximated by min(lambda_max, 1 / (distance to nearest exemplar + 1e-12))";

/// Densest points of each leaf cluster, indexed like the concepts.
#[derive(Debug, Clone, PartialEq)]
pub struct ExemplarSet {
    pub points: Vec<Vec<usize>>,
}

/// Members of each leaf whose persistence equals the leaf's maximum.
pub fn exemplars(t: &CondensedTree, leaves: &LeafClustering) -> Result<ExemplarSet> {
    ensure!(leaves.k() >= 1, "exemplars need at least one leaf cluster");
    let mut points = Vec::with_capacity(leaves.k());
    for (concept, &cid) in leaves.leaves.iter().enumerate() {
        let members: Vec<_> = t.points.iter().filter(|p| p.cluster == cid).collect();
        if members.is_empty() {
            return Err(Error::Degenerate(format!("leaf cluster {concept} is empty")));
        }
        let max = members.iter().map(|p| p.lambda).fold(f64::NEG_INFINITY, f64::max);
        points.push(
            members
                .iter()
                .filter(|p| p.lambda >= max * (1.0 - EXEMPLAR_RTOL))
                .map(|p| p.point)
                .collect(),
        );
    }
    Ok(ExemplarSet { points })
}

/// Probabilistic concept memberships from the condensed tree.
///
/// For point `φ` and leaf `α`:
///
/// * distance membership: inverse distance to the nearest exemplar of `α`,
///   normalized over leaves;
/// * outlier membership: `(λ_{φ→α} − λ_birth) / (λ_max − λ_birth)`, clamped to
///   `[0, 1]`;
/// * combined: `dist^½ · outlier²`, normalized over leaves;
/// * final: combined score times `λ_{φ→α*} / λ_max(α*)`, where `α*` is the leaf
///   with the largest `λ_{φ→α}`.
///
/// `λ_{φ→α}` is the recorded persistence for members of `α` and
/// `min(λ_max, 1 / (d_exemplar + ε))` for everything else.
pub fn soft_memberships(
    t: &CondensedTree,
    leaves: &LeafClustering,
    ex: &ExemplarSet,
    x: ArrayView2<'_, f64>,
    seed: u64,
) -> Result<SoftClustering> {
    let n = t.n_points();
    let k = leaves.k();
    ensure!(k >= 1, "soft memberships need at least one cluster");
    ensure!(ex.points.len() == k, "exemplar set does not match clusters");
    ensure!(x.nrows() == n, "embedding has {} rows, tree {n}", x.nrows());

    let birth: Vec<f64> = leaves.leaves.iter().map(|&c| t.clusters[c].lambda_birth).collect();
    let max: Vec<f64> = leaves
        .leaves
        .iter()
        .enumerate()
        .map(|(a, &c)| {
            // Leaf maximum persistence over its point records.
            let m = t
                .points
                .iter()
                .filter(|p| p.cluster == c)
                .map(|p| p.lambda)
                .fold(t.clusters[c].lambda_birth, f64::max);
            debug_assert!(!ex.points[a].is_empty());
            m
        })
        .collect();

    let x = x.as_standard_layout();
    let rows = par::map_range(n, |i| {
        let xi = x.row(i);
        let xi = xi.as_slice().expect("standard layout");
        let mut dist_score = vec![0.0; k];
        let mut lam = vec![0.0; k];
        for a in 0..k {
            let dmin = ex.points[a]
                .iter()
                .map(|&e| euclidean(xi, x.row(e).as_slice().expect("standard layout")))
                .fold(f64::INFINITY, f64::min);
            dist_score[a] = 1.0 / (dmin + DIST_EPS);
            lam[a] = if leaves.labels[i] == a as i32 {
                t.points[i].lambda
            } else {
                max[a].min(1.0 / (dmin + DIST_EPS))
            };
        }
        let dist_total: f64 = dist_score.iter().sum();
        let mut combined = vec![0.0; k];
        for a in 0..k {
            let outlier = if max[a] > birth[a] {
                ((lam[a] - birth[a]) / (max[a] - birth[a])).clamp(0.0, 1.0)
            } else if leaves.labels[i] == a as i32 {
                1.0
            } else {
                0.0
            };
            combined[a] = (dist_score[a] / dist_total).sqrt() * outlier * outlier;
        }
        let total: f64 = combined.iter().sum();
        let nearest = (0..k)
            .max_by(|&p, &q| lam[p].total_cmp(&lam[q]).then(q.cmp(&p)))
            .expect("k >= 1");
        let in_some = if max[nearest] > 0.0 {
            (lam[nearest] / max[nearest]).clamp(0.0, 1.0)
        } else {
            0.0
        };
        if total > 0.0 {
            combined.iter().map(|c| (c / total * in_some).clamp(0.0, 1.0)).collect()
        } else {
            vec![0.0; k]
        }
    });

    let mut memberships = Array2::zeros((n, k));
    for (i, row) in rows.into_iter().enumerate() {
        for (a, v) in row.into_iter().enumerate() {
            memberships[[i, a]] = v;
        }
    }
    SoftClustering::new(
        memberships,
        leaves.labels.clone(),
        Some(LambdaStats { birth, max }),
        seed,
        "nlmcd",
    )
}
