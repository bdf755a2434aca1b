use std::path::Path;

use ndarray::ArrayView2;
use rand::seq::index;
use serde::{Deserialize, Serialize};

use crate::distance::Precomputed;
use crate::embed::{classical_mds, umap_layout, EmbedParams};
use crate::error::{ensure, Error, Result};
use crate::repr::RowMeta;
use crate::rng::stage_rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AtlasParams {
    pub n_neighbors: usize,
    pub min_dist: f64,
    pub epochs: usize,
    pub representatives: usize,
    pub seed: u64,
}

impl Default for AtlasParams {
    fn default() -> Self {
        Self {
            n_neighbors: 15,
            min_dist: 0.1,
            epochs: 500,
            representatives: 4,
            seed: 0,
        }
    }
}

/// One 2-D point per concept.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConceptAtlas {
    pub coords: Vec<[f64; 2]>,
    pub categories: Vec<Option<String>>,
    /// Point indices of sampled members per concept.
    pub representatives: Vec<Vec<usize>>,
}

/// Embeds concepts in 2-D from their pairwise distance matrix.
///
/// `members[α]` lists the points of concept `α`; up to
/// `params.representatives` of them are drawn per concept.
pub fn concept_atlas(
    pair: ArrayView2<'_, f64>,
    categories: Option<Vec<Option<String>>>,
    members: &[Vec<usize>],
    params: &AtlasParams,
) -> Result<ConceptAtlas> {
    let k = pair.nrows();
    ensure!(k >= 4, "concept atlas needs at least 4 concepts, got {k}");
    ensure!(members.len() == k, "{} member lists for {k} concepts", members.len());
    if let Some(c) = &categories {
        ensure!(c.len() == k, "{} categories for {k} concepts", c.len());
    }
    let metric = Precomputed::new(pair)?;
    let embed = EmbedParams {
        dim: 2,
        n_neighbors: params.n_neighbors.clamp(1, k - 1),
        min_dist: params.min_dist,
        spread: 1.0,
        epochs: params.epochs,
        negative_sample_rate: 5,
        seed: params.seed,
    };
    let init = classical_mds(pair, 2);
    let y = umap_layout(&metric, init, &embed)?;

    let mut rng = stage_rng(params.seed, "atlas");
    let representatives = members
        .iter()
        .map(|m| {
            let take = params.representatives.min(m.len());
            let mut r: Vec<usize> = index::sample(&mut rng, m.len(), take)
                .into_iter()
                .map(|i| m[i])
                .collect();
            r.sort_unstable();
            r
        })
        .collect();
    Ok(ConceptAtlas {
        coords: y.outer_iter().map(|r| [r[0], r[1]]).collect(),
        categories: categories.unwrap_or_else(|| vec![None; k]),
        representatives,
    })
}

fn member_ref(i: usize, meta: Option<&[RowMeta]>) -> String {
    match meta.and_then(|m| m.get(i)) {
        Some(RowMeta {
            image_id,
            grid_row: Some(r),
            grid_col: Some(c),
            ..
        }) => format!("{image_id}@{r}:{c}"),
        Some(m) => m.image_id.clone(),
        None => i.to_string(),
    }
}

/// `concept,x,y,category,representatives` with representatives joined by `;`.
pub fn write_atlas_csv(path: &Path, atlas: &ConceptAtlas, meta: Option<&[RowMeta]>) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Malformed {
            what: "csv",
            detail: format!("{other:?}"),
        },
    })?;
    w.write_record(["concept", "x", "y", "category", "representatives"])?;
    for (a, xy) in atlas.coords.iter().enumerate() {
        let reps: Vec<String> = atlas.representatives[a]
            .iter()
            .map(|&i| member_ref(i, meta))
            .collect();
        w.write_record([
            a.to_string(),
            xy[0].to_string(),
            xy[1].to_string(),
            atlas.categories[a].clone().unwrap_or_default(),
            reps.join(";"),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
