use serde::{Deserialize, Serialize};

use super::mst::Edge;
use super::soft::DIST_EPS;
use crate::error::{ensure, Result};

/// Persistence of a mutual-reachability scale, `1 / d`, with `d` floored at `DIST_EPS`.
pub(crate) fn lambda_of(d: f64) -> f64 {
    1.0 / d.max(DIST_EPS)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterNode {
    pub id: usize,
    pub parent: Option<usize>,
    pub lambda_birth: f64,
    /// Largest persistence reached inside the cluster (its last point or its split).
    pub lambda_max: f64,
    pub size: usize,
    pub children: Vec<usize>,
}

/// The cluster a point falls out of, and the persistence at which it does.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PointRecord {
    pub point: usize,
    pub cluster: usize,
    pub lambda: f64,
}

/// Pruned density hierarchy. Cluster `0` is the root.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CondensedTree {
    pub clusters: Vec<ClusterNode>,
    /// Indexed by point.
    pub points: Vec<PointRecord>,
    pub min_cluster_size: usize,
}

impl CondensedTree {
    pub fn n_points(&self) -> usize {
        self.points.len()
    }

    pub fn is_leaf(&self, cluster: usize) -> bool {
        self.clusters[cluster].children.is_empty()
    }
}

struct Merge {
    left: usize,
    right: usize,
    dist: f64,
    size: usize,
}

fn find(parent: &mut [usize], mut x: usize) -> usize {
    while parent[x] != x {
        parent[x] = parent[parent[x]];
        x = parent[x];
    }
    x
}

/// Single-linkage merges in order of ascending edge weight.
fn dendrogram(mst: &[Edge], n: usize) -> Vec<Merge> {
    let mut sorted = mst.to_vec();
    sorted.sort_by(|x, y| {
        x.weight
            .total_cmp(&y.weight)
            .then(x.a.cmp(&y.a))
            .then(x.b.cmp(&y.b))
    });
    let mut uf: Vec<usize> = (0..n).collect();
    let mut node_of: Vec<usize> = (0..n).collect();
    let mut size_of = vec![1usize; n];
    let mut merges = Vec::with_capacity(n.saturating_sub(1));
    for e in sorted {
        let (ra, rb) = (find(&mut uf, e.a), find(&mut uf, e.b));
        let (left, right) = (node_of[ra], node_of[rb]);
        let size = size_of[ra] + size_of[rb];
        uf[rb] = ra;
        size_of[ra] = size;
        node_of[ra] = n + merges.len();
        merges.push(Merge {
            left,
            right,
            dist: e.weight,
            size,
        });
    }
    merges
}

/// Condenses the single-linkage hierarchy of `mst` over `n` points.
///
/// At every split, a child with fewer than `min_cluster_size` points has its
/// points fall out of the parent at the split's persistence; when both children
/// are large enough, each becomes a new cluster born at that persistence.
pub fn build_condensed_tree(
    mst: &[Edge],
    n: usize,
    min_cluster_size: usize,
) -> Result<CondensedTree> {
    ensure!(min_cluster_size >= 2, "min_cluster_size must be >= 2");
    ensure!(n >= 2, "condensed tree needs at least 2 points");
    ensure!(
        mst.len() == n - 1,
        "spanning tree over {n} points must have {} edges, got {}",
        n - 1,
        mst.len()
    );
    let merges = dendrogram(mst, n);
    ensure!(merges.len() == n - 1, "spanning tree is disconnected");
    let size = |node: usize| if node < n { 1 } else { merges[node - n].size };

    let mut clusters = vec![ClusterNode {
        id: 0,
        parent: None,
        lambda_birth: 0.0,
        lambda_max: 0.0,
        size: n,
        children: Vec::new(),
    }];
    let mut points = vec![
        PointRecord {
            point: usize::MAX,
            cluster: 0,
            lambda: 0.0,
        };
        n
    ];

    let mut fall_out = |node: usize, cluster: usize, lambda: f64, clusters: &mut Vec<ClusterNode>| {
        let mut stack = vec![node];
        while let Some(cur) = stack.pop() {
            if cur < n {
                points[cur] = PointRecord {
                    point: cur,
                    cluster,
                    lambda,
                };
                let c = &mut clusters[cluster];
                c.lambda_max = c.lambda_max.max(lambda);
            } else {
                let m = &merges[cur - n];
                stack.push(m.right);
                stack.push(m.left);
            }
        }
    };

    let root = 2 * n - 2;
    let mut work = vec![(root, 0usize)];
    while let Some((node, cluster)) = work.pop() {
        if node < n {
            let lambda = clusters[cluster].lambda_birth;
            fall_out(node, cluster, lambda, &mut clusters);
            continue;
        }
        let m = &merges[node - n];
        let lambda = lambda_of(m.dist);
        let (left, right) = (m.left, m.right);
        let left_big = size(left) >= min_cluster_size;
        let right_big = size(right) >= min_cluster_size;
        match (left_big, right_big) {
            (true, true) => {
                clusters[cluster].lambda_max = clusters[cluster].lambda_max.max(lambda);
                let mut ids = [0usize; 2];
                for (slot, child) in [left, right].into_iter().enumerate() {
                    let id = clusters.len();
                    clusters.push(ClusterNode {
                        id,
                        parent: Some(cluster),
                        lambda_birth: lambda,
                        lambda_max: lambda,
                        size: size(child),
                        children: Vec::new(),
                    });
                    clusters[cluster].children.push(id);
                    ids[slot] = id;
                }
                // Right first so the left subtree is processed first.
                work.push((right, ids[1]));
                work.push((left, ids[0]));
            }
            (true, false) => {
                fall_out(right, cluster, lambda, &mut clusters);
                work.push((left, cluster));
            }
            (false, true) => {
                fall_out(left, cluster, lambda, &mut clusters);
                work.push((right, cluster));
            }
            (false, false) => {
                fall_out(left, cluster, lambda, &mut clusters);
                fall_out(right, cluster, lambda, &mut clusters);
            }
        }
    }
    Ok(CondensedTree {
        clusters,
        points,
        min_cluster_size,
    })
}

/// Hard assignment to the leaves of a condensed tree.
#[derive(Debug, Clone, PartialEq)]
pub struct LeafClustering {
    /// Concept index per point, `-1` for noise.
    pub labels: Vec<i32>,
    /// Condensed-tree cluster id of each concept.
    pub leaves: Vec<usize>,
    pub noise_rate: f64,
}

impl LeafClustering {
    pub fn k(&self) -> usize {
        self.leaves.len()
    }
}

/// Uses the leaf nodes of the condensed tree as clusters.
///
/// Points that fall out of an internal node before reaching any leaf are noise.
/// A tree whose root is smaller than `min_cluster_size` has no clusters.
pub fn extract_leaf_clusters(t: &CondensedTree) -> LeafClustering {
    let n = t.n_points();
    let mut concept_of = vec![-1i32; t.clusters.len()];
    let mut leaves = Vec::new();
    if t.clusters[0].size >= t.min_cluster_size {
        for c in &t.clusters {
            if c.children.is_empty() {
                concept_of[c.id] = leaves.len() as i32;
                leaves.push(c.id);
            }
        }
    }
    let labels: Vec<i32> = t.points.iter().map(|p| concept_of[p.cluster]).collect();
    let noise = labels.iter().filter(|&&l| l < 0).count();
    LeafClustering {
        labels,
        leaves,
        noise_rate: noise as f64 / n as f64,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::density::{core_distances, minimum_spanning_tree, mutual_reachability};
    use crate::distance::{knn_graph, Points};
    use ndarray::Array2;
    use rand::{Rng, SeedableRng};
    use rand_distr::{Distribution, StandardNormal};

    fn tree_for(x: &Array2<f64>, min_samples: usize, mcs: usize) -> CondensedTree {
        let v = x.view();
        let p = Points::new(&v);
        let g = knn_graph(&p, min_samples).unwrap();
        let core = core_distances(&g, min_samples).unwrap();
        let mrd = mutual_reachability(&p, &core).unwrap();
        let mst = minimum_spanning_tree(&mrd).unwrap();
        build_condensed_tree(&mst, x.nrows(), mcs).unwrap()
    }

    fn blobs(sizes: &[usize], gap: f64, seed: u64) -> (Array2<f64>, Vec<i32>) {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let n: usize = sizes.iter().sum();
        let mut x = Array2::zeros((n, 2));
        let mut labels = Vec::new();
        let mut row = 0;
        for (b, &s) in sizes.iter().enumerate() {
            for _ in 0..s {
                x[[row, 0]] = b as f64 * gap + Distribution::<f64>::sample(&StandardNormal, &mut rng);
                x[[row, 1]] = StandardNormal.sample(&mut rng);
                labels.push(b as i32);
                row += 1;
            }
        }
        (x, labels)
    }

    fn check_invariants(t: &CondensedTree) {
        for c in &t.clusters {
            assert!(c.lambda_birth <= c.lambda_max);
            if let Some(p) = c.parent {
                assert!(c.lambda_birth >= t.clusters[p].lambda_birth);
            }
        }
        for (i, p) in t.points.iter().enumerate() {
            assert_eq!(p.point, i);
        }
    }

    #[test]
    fn two_separated_blobs_give_two_leaves() {
        let (x, truth) = blobs(&[60, 60], 50.0, 1);
        let t = tree_for(&x, 5, 50);
        check_invariants(&t);
        let leaves = extract_leaf_clusters(&t);
        assert_eq!(leaves.k(), 2);
        let ari = crate::metrics::adjusted_rand_index(&leaves.labels, &truth);
        assert!((ari - 1.0).abs() < 1e-12, "ari {ari}");
    }

    #[test]
    fn large_min_cluster_size_keeps_root() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2);
        let x = Array2::from_shape_fn((100, 2), |_| rng.random::<f64>());
        let t = tree_for(&x, 5, 99);
        check_invariants(&t);
        assert_eq!(t.clusters.len(), 1);
        let leaves = extract_leaf_clusters(&t);
        assert_eq!(leaves.leaves, vec![0]);
        assert_eq!(leaves.noise_rate, 0.0);
    }

    #[test]
    fn small_blob_never_splits() {
        let (x, _) = blobs(&[40], 1.0, 3);
        let t = tree_for(&x, 5, 50);
        assert_eq!(t.clusters.len(), 1);
        let leaves = extract_leaf_clusters(&t);
        assert_eq!(leaves.k(), 0);
        assert_eq!(leaves.noise_rate, 1.0);
    }

    #[test]
    fn every_point_recorded_once() {
        let (x, _) = blobs(&[30, 30, 30], 20.0, 4);
        let t = tree_for(&x, 4, 10);
        check_invariants(&t);
        let mut seen = vec![0; x.nrows()];
        for p in &t.points {
            seen[p.point] += 1;
        }
        assert!(seen.iter().all(|&c| c == 1));
    }
}
