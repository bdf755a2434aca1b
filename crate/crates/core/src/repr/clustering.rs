use std::fs;
use std::path::Path;

use ndarray::{Array2, ArrayView1, Axis};
use serde::{Deserialize, Serialize};

use super::binio::{read_f32_le, read_i32_le, write_f32_le, write_i32_le};
use super::manifest::RunManifest;
use super::SCHEMA_VERSION;
use crate::error::{ensure, Error, Result};

/// Slack allowed on membership row sums (float32 storage and normalization).
pub const ROW_SUM_TOLERANCE: f64 = 1e-6;

/// Birth and maximum persistence per concept.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LambdaStats {
    pub birth: Vec<f64>,
    pub max: Vec<f64>,
}

/// Concept proximity scores `P^α(φ_i)` for n points over k concepts.
#[derive(Debug, Clone, PartialEq)]
pub struct SoftClustering {
    pub memberships: Array2<f64>,
    /// Hard assignment per point; `-1` marks noise.
    pub hard_labels: Vec<i32>,
    pub lambda: Option<LambdaStats>,
    pub noise_rate: f64,
    pub seed: u64,
    /// Producing method, e.g. `"nlmcd"`, `"pca"`, `"kmeans"`, `"crisp"`.
    pub method: String,
}

impl SoftClustering {
    pub fn new(
        memberships: Array2<f64>,
        hard_labels: Vec<i32>,
        lambda: Option<LambdaStats>,
        seed: u64,
        method: impl Into<String>,
    ) -> Result<Self> {
        let noise = hard_labels.iter().filter(|&&l| l < 0).count();
        let noise_rate = if hard_labels.is_empty() {
            0.0
        } else {
            noise as f64 / hard_labels.len() as f64
        };
        let c = Self {
            memberships,
            hard_labels,
            lambda,
            noise_rate,
            seed,
            method: method.into(),
        };
        c.validate()?;
        Ok(c)
    }

    /// Builds a clustering whose hard labels are the row argmax (`-1` for all-zero rows).
    pub fn from_memberships(memberships: Array2<f64>, seed: u64, method: &str) -> Result<Self> {
        let labels = memberships
            .axis_iter(Axis(0))
            .map(|row| argmax(row).map_or(-1, |a| a as i32))
            .collect();
        Self::new(memberships, labels, None, seed, method)
    }

    pub fn n(&self) -> usize {
        self.memberships.nrows()
    }

    pub fn k(&self) -> usize {
        self.memberships.ncols()
    }

    pub fn validate(&self) -> Result<()> {
        let (n, k) = self.memberships.dim();
        ensure!(k >= 1, "clustering has no concepts");
        ensure!(
            self.hard_labels.len() == n,
            "{} hard labels for {n} rows",
            self.hard_labels.len()
        );
        for (i, row) in self.memberships.axis_iter(Axis(0)).enumerate() {
            let mut sum = 0.0;
            for &v in row {
                ensure!(
                    (0.0..=1.0).contains(&v),
                    "membership {v} at row {i} outside [0, 1]"
                );
                sum += v;
            }
            ensure!(
                sum <= 1.0 + ROW_SUM_TOLERANCE,
                "row {i} sums to {sum} > 1"
            );
        }
        ensure!(
            self.hard_labels.iter().all(|&l| l >= -1 && (l as i64) < k as i64),
            "hard label out of range for k = {k}"
        );
        if let Some(l) = &self.lambda {
            ensure!(
                l.birth.len() == k && l.max.len() == k,
                "lambda statistics do not match k = {k}"
            );
        }
        Ok(())
    }

    pub fn select_rows(&self, rows: &[usize]) -> SoftClustering {
        let labels: Vec<i32> = rows.iter().map(|&i| self.hard_labels[i]).collect();
        let noise = labels.iter().filter(|&&l| l < 0).count();
        SoftClustering {
            memberships: self.memberships.select(Axis(0), rows),
            noise_rate: if rows.is_empty() { 0.0 } else { noise as f64 / rows.len() as f64 },
            hard_labels: labels,
            lambda: self.lambda.clone(),
            seed: self.seed,
            method: self.method.clone(),
        }
    }

    /// Same clustering with concept columns reordered: new column `j` is old `perm[j]`.
    pub fn permute_concepts(&self, perm: &[usize]) -> SoftClustering {
        let mut inverse = vec![0usize; perm.len()];
        for (new, &old) in perm.iter().enumerate() {
            inverse[old] = new;
        }
        SoftClustering {
            memberships: self.memberships.select(Axis(1), perm),
            hard_labels: self
                .hard_labels
                .iter()
                .map(|&l| if l < 0 { l } else { inverse[l as usize] as i32 })
                .collect(),
            lambda: self.lambda.as_ref().map(|l| LambdaStats {
                birth: perm.iter().map(|&p| l.birth[p]).collect(),
                max: perm.iter().map(|&p| l.max[p]).collect(),
            }),
            noise_rate: self.noise_rate,
            seed: self.seed,
            method: self.method.clone(),
        }
    }

    /// Member row indices of each concept under the hard labels.
    pub fn members(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.k()];
        for (i, &l) in self.hard_labels.iter().enumerate() {
            if l >= 0 {
                out[l as usize].push(i);
            }
        }
        out
    }
}

pub(crate) fn argmax(row: ArrayView1<'_, f64>) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (j, &v) in row.iter().enumerate() {
        if v > 0.0 && best.is_none_or(|(_, b)| v > b) {
            best = Some((j, v));
        }
    }
    best.map(|(j, _)| j)
}

#[derive(Debug, Serialize, Deserialize)]
struct ClusteringFile {
    schema_version: u32,
    method: String,
    n: usize,
    k: usize,
    noise_rate: f64,
    seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    lambda: Option<LambdaStats>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    params: Option<RunManifest>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    notes: Vec<String>,
}

/// Writes `clustering.json`, `memberships.bin` and `hard_labels.bin`.
pub fn save_clustering(
    c: &SoftClustering,
    dir: &Path,
    params: Option<&RunManifest>,
    notes: &[String],
) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let file = ClusteringFile {
        schema_version: SCHEMA_VERSION,
        method: c.method.clone(),
        n: c.n(),
        k: c.k(),
        noise_rate: c.noise_rate,
        seed: c.seed,
        lambda: c.lambda.clone(),
        params: params.cloned(),
        notes: notes.to_vec(),
    };
    let path = dir.join("clustering.json");
    fs::write(&path, serde_json::to_vec_pretty(&file)?).map_err(|e| Error::io(&path, e))?;
    write_f32_le(&dir.join("memberships.bin"), c.memberships.iter().copied())?;
    write_i32_le(&dir.join("hard_labels.bin"), &c.hard_labels)
}

pub fn load_clustering(dir: &Path) -> Result<(SoftClustering, Option<RunManifest>)> {
    let path = dir.join("clustering.json");
    if !path.exists() {
        return Err(Error::MissingFile(path));
    }
    let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
    let file: ClusteringFile = serde_json::from_slice(&bytes).map_err(|e| Error::Malformed {
        what: "clustering.json",
        detail: e.to_string(),
    })?;
    let values = read_f32_le(&dir.join("memberships.bin"), file.n * file.k)?;
    let memberships = Array2::from_shape_vec((file.n, file.k), values)
        .map_err(|e| Error::SizeMismatch(e.to_string()))?;
    let labels = read_i32_le(&dir.join("hard_labels.bin"), file.n)?;
    let c = SoftClustering::new(memberships, labels, file.lambda, file.seed, file.method)?;
    Ok((c, file.params))
}
