//! Concept formation graphs, concept matching across models, concept atlases
//! and category voting.

mod atlas;
mod category;
mod cfg;
mod hungarian;

use std::fs;
use std::path::Path;

pub use atlas::{concept_atlas, write_atlas_csv, AtlasParams, ConceptAtlas};
pub use category::{concept_categories, load_category_map, majority_category};
pub use cfg::{
    assign_tokens, build_cfg, transition_matrix, ConceptEdge, ConceptGraph, ConceptNode,
    TokenAssignment, DEFAULT_ASSIGNMENT_THRESHOLD, DEFAULT_CONTRIBUTION_THRESHOLD,
};
pub use hungarian::{hungarian_match, matching_cost};

use crate::error::{Error, Result};

pub fn save_graph(path: &Path, g: &ConceptGraph) -> Result<()> {
    let json = serde_json::to_string_pretty(g)?;
    fs::write(path, json + "\n").map_err(|e| Error::io(path, e))
}
