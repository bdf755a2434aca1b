//! Linear and centroid concept baselines, and the neighboring-layer sanity check.

mod kmeans;
mod sanity;

use ndarray::{Array2, ArrayView2};

pub use kmeans::{kmeans, kmeans_concepts, KMeans, MAX_ITER};
pub use sanity::{sanity_check, save_sanity_table, SanityEntry, SanityResult, SanityTable};

use crate::embed::Pca;
use crate::error::{ensure, Result};
use crate::repr::SoftClustering;

/// Added to centroid distances before inversion.
pub const SCORE_EPS: f64 = 1e-12;

/// Divides each row by its sum; all-zero rows stay zero.
pub(crate) fn normalize_rows(mut m: Array2<f64>) -> Array2<f64> {
    for mut row in m.rows_mut() {
        let s: f64 = row.sum();
        if s > 0.0 {
            row.mapv_inplace(|v| (v / s).min(1.0));
        }
    }
    m
}

/// Concepts as principal directions: score `max(0, ⟨φ − μ, v_α⟩)`, normalized per row.
pub fn pca_concepts(x: ArrayView2<'_, f64>, n_components: usize) -> Result<SoftClustering> {
    let (n, f) = x.dim();
    ensure!(
        n_components >= 1 && n_components <= n.min(f),
        "n_components = {n_components} must be in 1..={}",
        n.min(f)
    );
    let pca = Pca::fit(x, n_components)?;
    let scores = pca.transform(x).mapv(|v| v.max(0.0));
    SoftClustering::from_memberships(normalize_rows(scores), 0, "pca")
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Axis};
    use rand::SeedableRng;
    use rand_distr::{Distribution, StandardNormal};

    fn cloud(seed: u64) -> Array2<f64> {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let scales = [5.0, 2.0, 1.0];
        Array2::from_shape_fn((200, 3), |(_, j)| {
            scales[j] * Distribution::<f64>::sample(&StandardNormal, &mut rng)
        })
    }

    #[test]
    fn clipping_and_one_hot() {
        let x = array![[3.0, 0.0], [-3.0, 0.0], [0.0, 1.0], [0.0, -1.0]];
        let c = pca_concepts(x.view(), 2).unwrap();
        let pca = Pca::fit(x.view(), 2).unwrap();
        // Point 0 lies on +v1 (or −v1, depending on the sign convention).
        let on_plus = if pca.components[[0, 0]] > 0.0 { 0 } else { 1 };
        assert_eq!(c.memberships.row(on_plus).to_vec(), vec![1.0, 0.0]);
        assert_eq!(c.memberships.row(1 - on_plus).to_vec(), vec![0.0, 0.0]);
        assert_eq!(c.hard_labels[1 - on_plus], -1);
    }

    #[test]
    fn rows_sum_to_one_or_zero() {
        let c = pca_concepts(cloud(1).view(), 3).unwrap();
        for row in c.memberships.axis_iter(Axis(0)) {
            let s = row.sum();
            assert!(s == 0.0 || (s - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn translation_invariant() {
        let x = cloud(2);
        let a = pca_concepts(x.view(), 3).unwrap();
        let b = pca_concepts((&x + 100.0).view(), 3).unwrap();
        for (u, v) in a.memberships.iter().zip(b.memberships.iter()) {
            assert!((u - v).abs() < 1e-9);
        }
    }

    #[test]
    fn too_many_components() {
        assert!(pca_concepts(cloud(3).view(), 4).is_err());
    }
}
