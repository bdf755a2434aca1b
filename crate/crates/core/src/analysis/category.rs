use std::collections::BTreeMap;
use std::path::Path;

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::repr::SoftClustering;

/// Most frequent label; ties go to the lexicographically smallest.
pub fn majority_category<S: AsRef<str>>(labels: &[S]) -> Result<String> {
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for l in labels {
        *counts.entry(l.as_ref()).or_default() += 1;
    }
    // BTreeMap iterates in ascending key order, so the first maximum wins.
    let mut best: Option<(&str, usize)> = None;
    for (label, c) in counts {
        if best.is_none_or(|(_, b)| c > b) {
            best = Some((label, c));
        }
    }
    best.map(|(l, _)| l.to_string())
        .ok_or_else(|| Error::Validation("majority vote over an empty list".into()))
}

#[derive(Deserialize)]
struct MappingRow {
    class_label: i64,
    category: String,
}

/// Reads a `class_label,category` CSV.
pub fn load_category_map(path: &Path) -> Result<BTreeMap<i64, String>> {
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    let mut r = csv::Reader::from_path(path)?;
    let mut map = BTreeMap::new();
    for (line, row) in r.deserialize::<MappingRow>().enumerate() {
        let row = row.map_err(|e| Error::Malformed {
            what: "category map",
            detail: format!("row {}: {e}", line + 1),
        })?;
        map.insert(row.class_label, row.category);
    }
    Ok(map)
}

/// Majority category over the hard members of each concept; `None` when no
/// member has a mapped class label.
pub fn concept_categories(
    c: &SoftClustering,
    class_labels: &[i64],
    map: &BTreeMap<i64, String>,
) -> Result<Vec<Option<String>>> {
    crate::error::ensure!(
        class_labels.len() == c.n(),
        "{} class labels for {} points",
        class_labels.len(),
        c.n()
    );
    Ok(c.members()
        .iter()
        .map(|m| {
            let cats: Vec<&String> = m.iter().filter_map(|&i| map.get(&class_labels[i])).collect();
            majority_category(&cats).ok()
        })
        .collect())
}
