use nalgebra::{DMatrix, SymmetricEigen};
use ndarray::{Array1, Array2, ArrayView2, Axis};

use super::Embedding;
use crate::error::{ensure, Error, Result};
use crate::repr::FeatureMatrix;

/// Relative eigenvalue threshold below which a direction counts as null.
const RANK_TOL: f64 = 1e-10;

/// Principal axes of a mean-centered point cloud.
///
/// Components are sorted by descending eigenvalue; each is signed so that its
/// largest-magnitude loading is positive.
#[derive(Debug, Clone)]
pub struct Pca {
    pub mean: Array1<f64>,
    /// `n_components × f`, one unit vector per row.
    pub components: Array2<f64>,
    /// Covariance eigenvalues (variance along each component).
    pub eigenvalues: Array1<f64>,
    /// Sum of all covariance eigenvalues, kept or not.
    pub total_variance: f64,
    pub rank: usize,
}

impl Pca {
    /// Fits the top `n_components` axes without a rank check.
    pub fn fit(x: ArrayView2<'_, f64>, n_components: usize) -> Result<Self> {
        let (n, f) = x.dim();
        ensure!(n >= 1 && f >= 1, "PCA needs a non-empty matrix");
        ensure!(
            n_components >= 1 && n_components <= f,
            "n_components = {n_components} must be in 1..={f}"
        );
        let mean = x.mean_axis(Axis(0)).expect("n >= 1");
        let centered = &x - &mean;
        let cov = centered.t().dot(&centered) / (n.saturating_sub(1).max(1) as f64);
        let cov = DMatrix::from_fn(f, f, |i, j| cov[[i, j]]);
        let eig = SymmetricEigen::new(cov);

        let mut order: Vec<usize> = (0..f).collect();
        order.sort_by(|&a, &b| {
            eig.eigenvalues[b]
                .total_cmp(&eig.eigenvalues[a])
                .then(a.cmp(&b))
        });
        let top = eig.eigenvalues[order[0]].max(0.0);
        let rank = order
            .iter()
            .filter(|&&i| eig.eigenvalues[i] > RANK_TOL * top.max(f64::MIN_POSITIVE))
            .count();
        let total_variance = eig.eigenvalues.iter().map(|v| v.max(0.0)).sum();

        let mut components = Array2::zeros((n_components, f));
        let mut eigenvalues = Array1::zeros(n_components);
        for (c, &col) in order.iter().take(n_components).enumerate() {
            let v = eig.eigenvectors.column(col);
            let pivot = v
                .iter()
                .copied()
                .enumerate()
                .max_by(|a, b| a.1.abs().total_cmp(&b.1.abs()).then(b.0.cmp(&a.0)))
                .map_or(1.0, |(_, val)| val);
            let sign = if pivot < 0.0 { -1.0 } else { 1.0 };
            for j in 0..f {
                components[[c, j]] = sign * v[j];
            }
            eigenvalues[c] = eig.eigenvalues[col].max(0.0);
        }
        Ok(Self {
            mean,
            components,
            eigenvalues,
            total_variance,
            rank,
        })
    }

    pub fn transform(&self, x: ArrayView2<'_, f64>) -> Array2<f64> {
        (&x - &self.mean).dot(&self.components.t())
    }

    pub fn inverse_transform(&self, z: ArrayView2<'_, f64>) -> Array2<f64> {
        z.dot(&self.components) + &self.mean
    }

    pub fn explained_variance_ratio(&self) -> Array1<f64> {
        if self.total_variance > 0.0 {
            &self.eigenvalues / self.total_variance
        } else {
            Array1::zeros(self.eigenvalues.len())
        }
    }
}

/// Projection onto the top `dim` principal components.
pub fn pca_reduce(m: &FeatureMatrix, dim: usize) -> Result<Embedding> {
    ensure!(
        dim >= 1 && dim <= m.n().min(m.f()),
        "PCA dimension {dim} must be in 1..={}",
        m.n().min(m.f())
    );
    let pca = Pca::fit(m.data(), dim)?;
    if dim > pca.rank {
        return Err(Error::Degenerate(format!(
            "requested {dim} components but data has rank {}",
            pca.rank
        )));
    }
    Ok(Embedding {
        coords: pca.transform(m.data()),
        params: None,
    })
}
