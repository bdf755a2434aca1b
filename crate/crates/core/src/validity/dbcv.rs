//! Density-based clustering validation.
//!
//! Each cluster gets a validity score in `[-1, 1]` contrasting its internal
//! density sparseness (largest internal edge of its mutual-reachability MST)
//! with its density separation (smallest mutual reachability to any other
//! cluster, between internal MST nodes).

use ndarray::ArrayView2;

use crate::density::{minimum_spanning_tree, mutual_reachability, Edge};
use crate::distance::{euclidean, Metric, Points};
use crate::error::{ensure, Error, Result};
use crate::par;

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct DbcvReport {
    /// Validity per cluster, ordered by label.
    pub per_cluster: Vec<f64>,
    /// Unweighted mean over clusters.
    pub mean: f64,
    /// Mean weighted by cluster size over all points, noise included.
    pub weighted_mean: f64,
}

impl DbcvReport {
    pub fn value(&self, weighting: Weighting) -> f64 {
        match weighting {
            Weighting::Unweighted => self.mean,
            Weighting::SizeWeighted => self.weighted_mean,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Weighting {
    #[default]
    Unweighted,
    SizeWeighted,
}

struct ClusterGeometry {
    members: Vec<usize>,
    apts: Vec<f64>,
    internal: Vec<usize>,
    sparseness: f64,
}

/// All-points core distance: the inverse `dim`-mean of inverse distances to
/// the other members, computed in log space.
fn all_points_core_distance(pts: &Points<'_>, members: &[usize], me: usize, dim: f64) -> f64 {
    let mut logs = Vec::with_capacity(members.len() - 1);
    for &other in members {
        if other == me {
            continue;
        }
        let d = euclidean(pts.row(me), pts.row(other));
        if d == 0.0 {
            return 0.0;
        }
        logs.push(-dim * d.ln());
    }
    let peak = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = peak + logs.iter().map(|v| (v - peak).exp()).sum::<f64>().ln();
    (-(lse - (logs.len() as f64).ln()) / dim).exp()
}

struct Subset<'a> {
    pts: &'a Points<'a>,
    members: &'a [usize],
}

impl Metric for Subset<'_> {
    fn len(&self) -> usize {
        self.members.len()
    }

    fn dist(&self, i: usize, j: usize) -> f64 {
        euclidean(self.pts.row(self.members[i]), self.pts.row(self.members[j]))
    }
}

fn geometry(pts: &Points<'_>, members: Vec<usize>) -> Result<ClusterGeometry> {
    let dim = pts.dim() as f64;
    let apts: Vec<f64> = members
        .iter()
        .map(|&m| all_points_core_distance(pts, &members, m, dim))
        .collect();
    let subset = Subset {
        pts,
        members: &members,
    };
    let mrd = mutual_reachability(&subset, &apts)?;
    let mst: Vec<Edge> = minimum_spanning_tree(&mrd)?;
    let mut degree = vec![0usize; members.len()];
    for e in &mst {
        degree[e.a] += 1;
        degree[e.b] += 1;
    }
    let mut internal: Vec<usize> = (0..members.len()).filter(|&i| degree[i] > 1).collect();
    if internal.is_empty() {
        internal = (0..members.len()).collect();
    }
    let is_internal = |i: usize| degree[i] > 1;
    let internal_edges: Vec<f64> = mst
        .iter()
        .filter(|e| is_internal(e.a) && is_internal(e.b))
        .map(|e| e.weight)
        .collect();
    let sparseness = if internal_edges.is_empty() {
        mst.iter().map(|e| e.weight).fold(0.0, f64::max)
    } else {
        internal_edges.into_iter().fold(0.0, f64::max)
    };
    Ok(ClusterGeometry {
        members,
        apts,
        internal,
        sparseness,
    })
}

/// Validity of the clustering `labels` (`-1` = noise) of the rows of `x`.
pub fn dbcv(x: ArrayView2<'_, f64>, labels: &[i32]) -> Result<DbcvReport> {
    ensure!(
        labels.len() == x.nrows(),
        "{} labels for {} points",
        labels.len(),
        x.nrows()
    );
    let k = labels.iter().copied().max().map_or(0, |m| (m + 1).max(0) as usize);
    let mut groups = vec![Vec::new(); k];
    for (i, &l) in labels.iter().enumerate() {
        if l >= 0 {
            groups[l as usize].push(i);
        }
    }
    groups.retain(|g| !g.is_empty());
    if groups.len() < 2 {
        return Err(Error::Validation(format!(
            "DBCV needs at least 2 clusters, got {}",
            groups.len()
        )));
    }
    if let Some(g) = groups.iter().find(|g| g.len() < 2) {
        return Err(Error::Validation(format!(
            "DBCV cluster containing point {} is a singleton",
            g[0]
        )));
    }

    let x = x.as_standard_layout();
    let view = x.view();
    let pts = Points::new(&view);
    let geoms = par::map_slice(&groups, |g| geometry(&pts, g.clone()))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;

    let c = geoms.len();
    let separation = |i: usize, j: usize| -> f64 {
        let (gi, gj) = (&geoms[i], &geoms[j]);
        let mut best = f64::INFINITY;
        for &a in &gi.internal {
            for &b in &gj.internal {
                let d = euclidean(pts.row(gi.members[a]), pts.row(gj.members[b]));
                best = best.min(d.max(gi.apts[a]).max(gj.apts[b]));
            }
        }
        best
    };
    let pairs: Vec<(usize, usize)> = (0..c).flat_map(|i| (i + 1..c).map(move |j| (i, j))).collect();
    let seps = par::map_slice(&pairs, |&(i, j)| separation(i, j));
    let mut min_sep = vec![f64::INFINITY; c];
    for (&(i, j), &s) in pairs.iter().zip(&seps) {
        min_sep[i] = min_sep[i].min(s);
        min_sep[j] = min_sep[j].min(s);
    }

    let per_cluster: Vec<f64> = geoms
        .iter()
        .zip(&min_sep)
        .map(|(g, &sep)| {
            let denom = sep.max(g.sparseness);
            if denom > 0.0 {
                (sep - g.sparseness) / denom
            } else {
                0.0
            }
        })
        .collect();
    let mean = per_cluster.iter().sum::<f64>() / c as f64;
    let weighted_mean = geoms
        .iter()
        .zip(&per_cluster)
        .map(|(g, v)| g.members.len() as f64 * v)
        .sum::<f64>()
        / labels.len() as f64;
    Ok(DbcvReport {
        per_cluster,
        mean,
        weighted_mean,
    })
}
