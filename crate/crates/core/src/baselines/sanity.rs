use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::align::cba;
use crate::error::{ensure, Error, Result};
use crate::par;
use crate::repr::{RunManifest, SoftClustering, SCHEMA_VERSION};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SanityResult {
    pub method: String,
    /// Position (in the input order) of the most aligned other layer, per layer.
    pub most_aligned: Vec<usize>,
    /// Fraction of layers whose most aligned layer is adjacent.
    pub ratio: f64,
    /// Layer × layer CBA values.
    pub cba: Vec<Vec<f64>>,
}

/// For each layer, finds the other layer with the highest CBA and counts how
/// often it is an adjacent one. Ties go to the lower position.
pub fn sanity_check(layers: &[SoftClustering], sample: &[usize], method: &str) -> Result<SanityResult> {
    let l = layers.len();
    ensure!(l >= 3, "sanity check needs at least 3 layers, got {l}");
    let pairs: Vec<(usize, usize)> = (0..l).flat_map(|a| (a + 1..l).map(move |b| (a, b))).collect();
    let values = par::map_slice(&pairs, |&(a, b)| {
        cba(layers[a].memberships.view(), layers[b].memberships.view(), sample)
    });
    let mut m = vec![vec![1.0; l]; l];
    for (&(a, b), v) in pairs.iter().zip(values) {
        let v = v?;
        m[a][b] = v;
        m[b][a] = v;
    }
    let most_aligned: Vec<usize> = (0..l)
        .map(|a| {
            (0..l)
                .filter(|&b| b != a)
                .fold(None, |best: Option<usize>, b| match best {
                    Some(x) if m[a][x] >= m[a][b] => Some(x),
                    _ => Some(b),
                })
                .expect("at least 2 other layers")
        })
        .collect();
    let hits = most_aligned
        .iter()
        .enumerate()
        .filter(|&(a, &b)| a.abs_diff(b) == 1)
        .count();
    Ok(SanityResult {
        method: method.to_string(),
        most_aligned,
        ratio: hits as f64 / l as f64,
        cba: m,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SanityEntry {
    pub method: String,
    pub model: String,
    pub ratio: f64,
    pub most_aligned: Vec<usize>,
}

/// Method × model table of neighbor-most-aligned ratios.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SanityTable {
    pub schema_version: u32,
    pub entries: Vec<SanityEntry>,
    #[serde(default)]
    pub manifest: Option<RunManifest>,
}

impl SanityTable {
    pub fn new() -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            entries: Vec::new(),
            manifest: None,
        }
    }

    pub fn push(&mut self, model: &str, r: &SanityResult) {
        self.entries.push(SanityEntry {
            method: r.method.clone(),
            model: model.to_string(),
            ratio: r.ratio,
            most_aligned: r.most_aligned.clone(),
        });
    }
}

impl Default for SanityTable {
    fn default() -> Self {
        Self::new()
    }
}

pub fn save_sanity_table(path: &Path, t: &SanityTable) -> Result<()> {
    let json = serde_json::to_string_pretty(t)?;
    fs::write(path, json + "\n").map_err(|e| Error::io(path, e))
}
