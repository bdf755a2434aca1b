//! In-memory data model and on-disk interchange format.
//!
//! A matrix directory holds three files:
//!
//! * `manifest.json`: shape, dtype (`"f32"`), byte order (`"little-endian"`),
//!   layout (`"row-major"`), source descriptor, and optional stage parameters;
//! * `data.bin`: `n * f` raw little-endian 32-bit floats;
//! * `meta.csv`: one row per vector: `image_id,class_label,grid_row,grid_col`.
//!
//! Clusterings use `clustering.json` + `memberships.bin` (n×k f32) +
//! `hard_labels.bin` (n i32, `-1` = noise).

mod binio;
pub(crate) mod clustering;
mod feature;
mod manifest;
mod subsample;

pub use binio::{read_f32_le, read_i32_le, write_f32_le, write_i32_le};
pub use clustering::{load_clustering, save_clustering, LambdaStats, SoftClustering};
pub use feature::{
    load_feature_matrix, load_matrix_dir, save_feature_matrix, save_matrix_dir, FeatureMatrix,
    MatrixManifest, RowMeta, Source, TokenKind,
};
pub use manifest::{hash_bytes, hash_file, RunManifest};
pub use subsample::{subsample, subsample_size};

/// Version stamped into every JSON artifact written by this crate.
pub const SCHEMA_VERSION: u32 = 1;
