//! Neighbor embedding (UMAP-style), PCA projection, and the distance-fidelity
//! diagnostic.

mod fidelity;
mod pca;
mod umap;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

pub use fidelity::distance_fidelity_rmse;
pub use pca::{pca_reduce, Pca};
pub use umap::{classical_mds, fit_ab, neighbor_embed, umap_layout};

/// Practical upper bound on the embedding dimension for density clustering.
pub const MAX_EMBED_DIM: usize = 50;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EmbedParams {
    pub dim: usize,
    pub n_neighbors: usize,
    pub min_dist: f64,
    pub spread: f64,
    pub epochs: usize,
    pub negative_sample_rate: usize,
    pub seed: u64,
}

impl Default for EmbedParams {
    fn default() -> Self {
        Self {
            dim: 50,
            n_neighbors: 30,
            min_dist: 0.01,
            spread: 1.0,
            epochs: 200,
            negative_sample_rate: 5,
            seed: 0,
        }
    }
}

/// Low-dimensional coordinates for the rows of a feature matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Embedding {
    pub coords: Array2<f64>,
    /// `None` for linear projections.
    pub params: Option<EmbedParams>,
}

impl Embedding {
    pub fn n(&self) -> usize {
        self.coords.nrows()
    }

    pub fn dim(&self) -> usize {
        self.coords.ncols()
    }
}
