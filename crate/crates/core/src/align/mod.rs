//! Concept-based alignment between soft clusterings of the same points.

mod cba;

use std::fs;
use std::path::Path;

use ndarray::Array2;
use rand::seq::index;
use serde::{Deserialize, Serialize};

pub use cba::{
    cba, concept_pair_distance, concept_pair_matrix, cross_distance, cross_distance_blocked,
    crisp_to_membership, membership_distance, DEFAULT_BLOCK, MAX_BLOCK, QUANT_BITS,
};

use crate::analysis::hungarian_match;
use crate::error::{ensure, Error, Result};
use crate::repr::{subsample, RunManifest, SoftClustering, SCHEMA_VERSION};
use crate::rng::stage_rng;

/// CBA between two runs over the same points.
pub fn robustness(c1: &SoftClustering, c2: &SoftClustering, sample: &[usize]) -> Result<f64> {
    if c1.n() != c2.n() {
        return Err(Error::SizeMismatch(format!(
            "runs cover {} and {} points",
            c1.n(),
            c2.n()
        )));
    }
    cba(c1.memberships.view(), c2.memberships.view(), sample)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AlignParams {
    /// Fraction of points used for CBA.
    pub sample_fraction: f64,
    /// Cap on the points used for the concept-pair matrix, drawn from the CBA sample.
    pub pair_matrix_points: usize,
    pub seed: u64,
}

impl Default for AlignParams {
    fn default() -> Self {
        Self {
            sample_fraction: 0.2,
            pair_matrix_points: 2000,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConceptMatch {
    pub alpha: usize,
    pub beta: usize,
    pub distance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignmentReport {
    pub schema_version: u32,
    pub a: String,
    pub b: String,
    pub cba: f64,
    pub d_cross: f64,
    /// Per-concept-pair distances, `k_P` rows of `k_Q` values.
    pub concept_pair_matrix: Vec<Vec<f64>>,
    /// Sum of all concept-pair distances.
    pub pair_sum: f64,
    /// Whether `pair_sum ≥ d_cross` on this instance.
    pub upper_bound_holds: bool,
    pub matches: Vec<ConceptMatch>,
    pub sample_size: usize,
    pub pair_matrix_sample_size: usize,
    pub seed: u64,
    pub manifest: Option<RunManifest>,
}

impl AlignmentReport {
    pub fn matrix(&self) -> Array2<f64> {
        let rows = self.concept_pair_matrix.len();
        let cols = self.concept_pair_matrix.first().map_or(0, Vec::len);
        Array2::from_shape_fn((rows, cols), |(a, b)| self.concept_pair_matrix[a][b])
    }
}

/// Sorted subset of `sample` of size at most `cap`.
fn cap_sample(sample: &[usize], cap: usize, seed: u64) -> Vec<usize> {
    if sample.len() <= cap {
        return sample.to_vec();
    }
    let mut rng = stage_rng(seed, "pair-sample");
    let mut picked: Vec<usize> = index::sample(&mut rng, sample.len(), cap)
        .into_iter()
        .map(|i| sample[i])
        .collect();
    picked.sort_unstable();
    picked
}

/// CBA, concept-pair matrix and Hungarian matches between `p` and `q`.
pub fn align(
    a: &str,
    p: &SoftClustering,
    b: &str,
    q: &SoftClustering,
    params: &AlignParams,
) -> Result<AlignmentReport> {
    ensure!(params.pair_matrix_points >= 2, "pair_matrix_points must be >= 2");
    if p.n() != q.n() {
        return Err(Error::SizeMismatch(format!(
            "{a} covers {} points, {b} covers {}",
            p.n(),
            q.n()
        )));
    }
    let sample = subsample(p.n(), params.sample_fraction, params.seed)?;
    let d_cross = cross_distance(p.memberships.view(), q.memberships.view(), &sample)?;
    let pair_sample = cap_sample(&sample, params.pair_matrix_points, params.seed);
    let m = concept_pair_matrix(p.memberships.view(), q.memberships.view(), &pair_sample)?;
    let pair_sum = m.sum();
    let matches = hungarian_match(m.view())?
        .into_iter()
        .map(|(alpha, beta)| ConceptMatch {
            alpha,
            beta,
            distance: m[[alpha, beta]],
        })
        .collect();
    Ok(AlignmentReport {
        schema_version: SCHEMA_VERSION,
        a: a.to_string(),
        b: b.to_string(),
        cba: 1.0 - d_cross,
        d_cross,
        concept_pair_matrix: m.outer_iter().map(|r| r.to_vec()).collect(),
        pair_sum,
        upper_bound_holds: pair_sum >= d_cross - 1e-9,
        matches,
        sample_size: sample.len(),
        pair_matrix_sample_size: pair_sample.len(),
        seed: params.seed,
        manifest: None,
    })
}

pub fn save_alignment(path: &Path, report: &AlignmentReport) -> Result<()> {
    let json = serde_json::to_string_pretty(report)?;
    fs::write(path, json + "\n").map_err(|e| Error::io(path, e))
}

pub fn load_alignment(path: &Path) -> Result<AlignmentReport> {
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

/// Writes a labeled square or rectangular matrix as CSV with a header row.
pub fn write_matrix_csv(
    path: &Path,
    row_names: &[String],
    col_names: &[String],
    m: &Array2<f64>,
) -> Result<()> {
    ensure!(
        m.dim() == (row_names.len(), col_names.len()),
        "matrix shape {:?} does not match labels",
        m.dim()
    );
    let mut w = csv::Writer::from_path(path).map_err(|e| match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Malformed {
            what: "csv",
            detail: format!("{other:?}"),
        },
    })?;
    let mut header = vec![String::new()];
    header.extend(col_names.iter().cloned());
    w.write_record(&header)?;
    for (name, row) in row_names.iter().zip(m.outer_iter()) {
        let mut rec = vec![name.clone()];
        rec.extend(row.iter().map(|v| format!("{v}")));
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}
