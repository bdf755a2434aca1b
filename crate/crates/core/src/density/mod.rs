//! Hierarchical density clustering with probabilistic memberships.
//!
//! Pipeline: core distances → mutual reachability → minimum spanning tree →
//! single-linkage dendrogram → condensed tree → leaf clusters → exemplars →
//! soft memberships.

mod mst;
mod reach;
mod soft;
mod tree;

use serde::{Deserialize, Serialize};

pub use mst::{minimum_spanning_tree, Edge};
pub use reach::{core_distances, mutual_reachability, MutualReachability};
pub use soft::{exemplars, soft_memberships, ExemplarSet, DIST_EPS, LAMBDA_PROXY_NOTE};
pub use tree::{
    build_condensed_tree, extract_leaf_clusters, ClusterNode, CondensedTree, LeafClustering,
    PointRecord,
};

use ndarray::ArrayView2;

use crate::distance::{knn_graph, Points};
use crate::error::{ensure, Error, Result};
use crate::repr::SoftClustering;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClusterParams {
    pub min_cluster_size: usize,
    /// Neighbor rank used for core distances (self excluded).
    pub min_samples: usize,
}

impl Default for ClusterParams {
    fn default() -> Self {
        Self {
            min_cluster_size: 50,
            min_samples: 20,
        }
    }
}

/// Everything produced by clustering one embedding.
#[derive(Debug, Clone)]
pub struct DensityClustering {
    pub tree: CondensedTree,
    pub leaves: LeafClustering,
    pub exemplars: ExemplarSet,
    pub soft: SoftClustering,
}

/// Clusters the rows of `x` and computes soft memberships.
pub fn cluster_embedding(
    x: ArrayView2<'_, f64>,
    params: &ClusterParams,
    seed: u64,
) -> Result<DensityClustering> {
    let n = x.nrows();
    ensure!(n >= 2, "need at least 2 points to cluster");
    ensure!(params.min_cluster_size >= 2, "min_cluster_size must be >= 2");
    let x = x.as_standard_layout();
    let view = x.view();
    let points = Points::new(&view);
    let k = params.min_samples.clamp(1, n - 1);
    let graph = knn_graph(&points, k)?;
    let core = core_distances(&graph, k)?;
    let mrd = mutual_reachability(&points, &core)?;
    let mst = minimum_spanning_tree(&mrd)?;
    let tree = build_condensed_tree(&mst, n, params.min_cluster_size)?;
    let leaves = extract_leaf_clusters(&tree);
    if leaves.k() == 0 {
        return Err(Error::Degenerate(format!(
            "no clusters found: {n} points, min_cluster_size {}",
            params.min_cluster_size
        )));
    }
    let ex = exemplars(&tree, &leaves)?;
    let soft = soft_memberships(&tree, &leaves, &ex, view, seed)?;
    Ok(DensityClustering {
        tree,
        leaves,
        exemplars: ex,
        soft,
    })
}
