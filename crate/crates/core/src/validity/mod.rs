//! Cluster-quality diagnostics: density-based validity and intrinsic dimension.

mod dbcv;
mod twonn;

use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};

pub use dbcv::{dbcv, DbcvReport, Weighting};
pub use twonn::{twonn_id, TRIM_FRACTION};

use crate::error::{ensure, Result};
use crate::repr::SCHEMA_VERSION;

/// Intrinsic dimension of each concept, measured on its hard members.
///
/// `None` marks concepts with too few distinct members for an estimate.
pub fn concept_intrinsic_dims(x: ArrayView2<'_, f64>, labels: &[i32], k: usize) -> Result<Vec<Option<f64>>> {
    ensure!(labels.len() == x.nrows(), "{} labels for {} rows", labels.len(), x.nrows());
    let mut out = Vec::with_capacity(k);
    for c in 0..k as i32 {
        let rows: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == c).collect();
        let sub = x.select(ndarray::Axis(0), &rows);
        out.push(twonn_id(sub.view()).ok());
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidityReport {
    pub schema_version: u32,
    pub dbcv: Option<DbcvReport>,
    /// Set when DBCV could not be computed.
    pub dbcv_error: Option<String>,
    /// Per-concept TWO-NN estimate in the original feature space.
    pub intrinsic_dim: Vec<Option<f64>>,
    pub mean_intrinsic_dim: Option<f64>,
    pub noise_rate: f64,
}

/// DBCV on the embedding plus per-concept intrinsic dimension on `original`.
pub fn validity_report(
    embedded: ArrayView2<'_, f64>,
    original: ArrayView2<'_, f64>,
    labels: &[i32],
    k: usize,
) -> Result<ValidityReport> {
    ensure!(embedded.nrows() == original.nrows(), "embedding and features differ in length");
    let (dbcv, dbcv_error) = match dbcv(embedded, labels) {
        Ok(r) => (Some(r), None),
        Err(e) if e.is_validation() => (None, Some(e.to_string())),
        Err(e) => return Err(e),
    };
    let intrinsic_dim = concept_intrinsic_dims(original, labels, k)?;
    let known: Vec<f64> = intrinsic_dim.iter().flatten().copied().collect();
    let mean_intrinsic_dim = (!known.is_empty()).then(|| known.iter().sum::<f64>() / known.len() as f64);
    let noise = labels.iter().filter(|&&l| l < 0).count();
    Ok(ValidityReport {
        schema_version: SCHEMA_VERSION,
        dbcv,
        dbcv_error,
        intrinsic_dim,
        mean_intrinsic_dim,
        noise_rate: noise as f64 / labels.len().max(1) as f64,
    })
}
