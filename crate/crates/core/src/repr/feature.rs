use std::fmt;
use std::fs;
use std::path::Path;

use ndarray::{Array2, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use super::binio::{read_f32_le, write_f32_le};
use super::manifest::RunManifest;
use super::SCHEMA_VERSION;
use crate::error::{ensure, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TokenKind {
    #[serde(rename = "SEQ")]
    Seq,
    #[serde(rename = "CLS")]
    Cls,
}

impl fmt::Display for TokenKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TokenKind::Seq => "SEQ",
            TokenKind::Cls => "CLS",
        })
    }
}

/// Which representation a matrix was taken from. Layers are 1-based.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Source {
    pub model: String,
    pub layer: u32,
    pub token_kind: TokenKind,
}

impl Source {
    pub fn new(model: impl Into<String>, layer: u32, token_kind: TokenKind) -> Self {
        Self {
            model: model.into(),
            layer,
            token_kind,
        }
    }

    /// Short filesystem-safe identifier, e.g. `dino_L06_SEQ`.
    pub fn tag(&self) -> String {
        let model: String = self
            .model
            .chars()
            .map(|c| if c.is_ascii_alphanumeric() || c == '-' { c } else { '_' })
            .collect();
        format!("{model}_L{:02}_{}", self.layer, self.token_kind)
    }
}

/// Per-row metadata for a feature vector.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RowMeta {
    pub image_id: String,
    pub class_label: Option<i64>,
    pub grid_row: Option<u32>,
    pub grid_col: Option<u32>,
}

impl RowMeta {
    pub fn image(id: impl Into<String>) -> Self {
        Self {
            image_id: id.into(),
            ..Self::default()
        }
    }

    /// Flat token-location label `row * 16 + col`, if the grid location is known.
    pub fn grid_label(&self) -> Option<usize> {
        Some(self.grid_row? as usize * 16 + self.grid_col? as usize)
    }
}

/// N feature vectors of dimension F from one representation.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    data: Array2<f64>,
    meta: Vec<RowMeta>,
    source: Source,
}

impl FeatureMatrix {
    pub fn new(data: Array2<f64>, meta: Vec<RowMeta>, source: Source) -> Result<Self> {
        let (n, f) = data.dim();
        ensure!(n >= 1 && f >= 1, "feature matrix must be non-empty, got {n}x{f}");
        ensure!(
            meta.len() == n,
            "metadata has {} rows but matrix has {n}",
            meta.len()
        );
        if let Some((idx, v)) = data.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(Error::Validation(format!(
                "non-finite value {v} at row {}, column {}",
                idx / f,
                idx % f
            )));
        }
        Ok(Self { data, meta, source })
    }

    /// Matrix with placeholder metadata (`image_id` = row index).
    pub fn from_array(data: Array2<f64>, source: Source) -> Result<Self> {
        let meta = (0..data.nrows()).map(|i| RowMeta::image(i.to_string())).collect();
        Self::new(data, meta, source)
    }

    pub fn n(&self) -> usize {
        self.data.nrows()
    }

    pub fn f(&self) -> usize {
        self.data.ncols()
    }

    pub fn data(&self) -> ArrayView2<'_, f64> {
        self.data.view()
    }

    pub fn row(&self, i: usize) -> ArrayView1<'_, f64> {
        self.data.row(i)
    }

    pub fn meta(&self) -> &[RowMeta] {
        &self.meta
    }

    pub fn source(&self) -> &Source {
        &self.source
    }

    pub fn into_parts(self) -> (Array2<f64>, Vec<RowMeta>, Source) {
        (self.data, self.meta, self.source)
    }

    pub fn select_rows(&self, rows: &[usize]) -> FeatureMatrix {
        FeatureMatrix {
            data: self.data.select(Axis(0), rows),
            meta: rows.iter().map(|&i| self.meta[i].clone()).collect(),
            source: self.source.clone(),
        }
    }

    pub fn class_labels(&self) -> Option<Vec<i64>> {
        self.meta.iter().map(|m| m.class_label).collect()
    }
}

/// Contents of `manifest.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixManifest {
    pub schema_version: u32,
    pub n: usize,
    pub f: usize,
    pub dtype: String,
    pub byte_order: String,
    pub layout: String,
    pub source: Source,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stage: Option<RunManifest>,
}

impl MatrixManifest {
    pub fn new(n: usize, f: usize, source: Source, stage: Option<RunManifest>) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            n,
            f,
            dtype: "f32".into(),
            byte_order: "little-endian".into(),
            layout: "row-major".into(),
            source,
            stage,
        }
    }

    /// Checks the declared format and returns the expected `data.bin` length.
    pub fn validate(&self) -> Result<usize> {
        ensure!(self.n >= 1 && self.f >= 1, "manifest shape {}x{} is empty", self.n, self.f);
        ensure!(self.dtype == "f32", "unsupported dtype {:?}", self.dtype);
        ensure!(
            self.byte_order == "little-endian",
            "unsupported byte order {:?}",
            self.byte_order
        );
        ensure!(self.layout == "row-major", "unsupported layout {:?}", self.layout);
        self.n
            .checked_mul(self.f)
            .and_then(|c| c.checked_mul(4))
            .ok_or_else(|| Error::SizeMismatch(format!("{}x{} overflows", self.n, self.f)))
    }
}

pub fn save_feature_matrix(m: &FeatureMatrix, dir: &Path) -> Result<()> {
    save_matrix_dir(dir, m.data.view(), &m.meta, &m.source, None)
}

/// Writes a matrix directory; shared by feature matrices and embeddings.
pub fn save_matrix_dir(
    dir: &Path,
    data: ArrayView2<'_, f64>,
    meta: &[RowMeta],
    source: &Source,
    stage: Option<RunManifest>,
) -> Result<()> {
    if data.iter().any(|v| !v.is_finite()) {
        return Err(Error::Validation("refusing to save non-finite values".into()));
    }
    ensure!(meta.len() == data.nrows(), "metadata row count mismatch");
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;

    let manifest = MatrixManifest::new(data.nrows(), data.ncols(), source.clone(), stage);
    let path = dir.join("manifest.json");
    fs::write(&path, serde_json::to_vec_pretty(&manifest)?).map_err(|e| Error::io(&path, e))?;

    write_f32_le(&dir.join("data.bin"), data.iter().copied())?;

    let path = dir.join("meta.csv");
    let mut w = csv::Writer::from_path(&path)?;
    for row in meta {
        w.serialize(row)?;
    }
    w.flush().map_err(|e| Error::io(&path, e))?;
    Ok(())
}

pub fn load_feature_matrix(dir: &Path) -> Result<FeatureMatrix> {
    let (m, _) = load_matrix_dir(dir)?;
    Ok(m)
}

/// Loads a matrix directory, returning the stage parameters if recorded.
pub fn load_matrix_dir(dir: &Path) -> Result<(FeatureMatrix, Option<RunManifest>)> {
    let path = dir.join("manifest.json");
    if !path.exists() {
        return Err(Error::MissingFile(path));
    }
    let text = fs::read(&path).map_err(|e| Error::io(&path, e))?;
    let manifest: MatrixManifest = serde_json::from_slice(&text).map_err(|e| Error::Malformed {
        what: "manifest.json",
        detail: e.to_string(),
    })?;
    manifest.validate()?;

    let values = read_f32_le(&dir.join("data.bin"), manifest.n * manifest.f)?;
    let data = Array2::from_shape_vec((manifest.n, manifest.f), values)
        .map_err(|e| Error::SizeMismatch(e.to_string()))?;

    let path = dir.join("meta.csv");
    if !path.exists() {
        return Err(Error::MissingFile(path));
    }
    let mut r = csv::Reader::from_path(&path)?;
    let meta = r
        .deserialize()
        .collect::<Result<Vec<RowMeta>, _>>()
        .map_err(|e| Error::Malformed {
            what: "meta.csv",
            detail: e.to_string(),
        })?;
    if meta.len() != manifest.n {
        return Err(Error::SizeMismatch(format!(
            "meta.csv has {} rows, manifest declares {}",
            meta.len(),
            manifest.n
        )));
    }
    Ok((FeatureMatrix::new(data, meta, manifest.source)?, manifest.stage))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn sample() -> FeatureMatrix {
        let meta = vec![
            RowMeta {
                image_id: "img_a".into(),
                class_label: Some(3),
                grid_row: Some(1),
                grid_col: Some(2),
            },
            RowMeta::image("img_b"),
            RowMeta {
                image_id: "img,c".into(),
                class_label: Some(-1),
                grid_row: None,
                grid_col: Some(0),
            },
        ];
        FeatureMatrix::new(
            array![[1.0, -2.5], [0.125, 3.0e-3], [7.0, 1.0e6]],
            meta,
            Source::new("vit/base", 4, TokenKind::Seq),
        )
        .unwrap()
    }

    #[test]
    fn roundtrip_3x2() {
        let dir = tempfile::tempdir().unwrap();
        let m = sample();
        save_feature_matrix(&m, dir.path()).unwrap();
        let back = load_feature_matrix(dir.path()).unwrap();
        assert_eq!(back.meta(), m.meta());
        assert_eq!(back.source(), m.source());
        for (a, b) in back.data().iter().zip(m.data().iter()) {
            assert_eq!(*a, f64::from(*b as f32));
        }
    }

    #[test]
    fn nan_rejected() {
        let r = FeatureMatrix::from_array(
            array![[1.0, f64::NAN]],
            Source::new("m", 1, TokenKind::Cls),
        );
        assert!(matches!(r, Err(Error::Validation(_))));
    }

    #[test]
    fn truncated_payload_is_size_mismatch() {
        let dir = tempfile::tempdir().unwrap();
        save_feature_matrix(&sample(), dir.path()).unwrap();
        let path = dir.path().join("data.bin");
        let bytes = fs::read(&path).unwrap();
        fs::write(&path, &bytes[..bytes.len() - 3]).unwrap();
        assert!(matches!(
            load_feature_matrix(dir.path()),
            Err(Error::SizeMismatch(_))
        ));
    }

    #[test]
    fn declared_width_larger_than_payload() {
        let dir = tempfile::tempdir().unwrap();
        let m = FeatureMatrix::from_array(
            Array2::zeros((2, 767)),
            Source::new("m", 1, TokenKind::Cls),
        )
        .unwrap();
        save_feature_matrix(&m, dir.path()).unwrap();
        let path = dir.path().join("manifest.json");
        let mut manifest: MatrixManifest =
            serde_json::from_slice(&fs::read(&path).unwrap()).unwrap();
        manifest.f = 768;
        fs::write(&path, serde_json::to_vec(&manifest).unwrap()).unwrap();
        assert!(matches!(
            load_feature_matrix(dir.path()),
            Err(Error::SizeMismatch(_))
        ));
    }

    #[test]
    fn missing_meta_file() {
        let dir = tempfile::tempdir().unwrap();
        save_feature_matrix(&sample(), dir.path()).unwrap();
        fs::remove_file(dir.path().join("meta.csv")).unwrap();
        assert!(matches!(
            load_feature_matrix(dir.path()),
            Err(Error::MissingFile(_))
        ));
    }

    #[test]
    fn malformed_meta() {
        let dir = tempfile::tempdir().unwrap();
        save_feature_matrix(&sample(), dir.path()).unwrap();
        fs::write(
            dir.path().join("meta.csv"),
            "image_id,class_label,grid_row,grid_col\na,notanumber,,\nb,,,\nc,,,\n",
        )
        .unwrap();
        assert!(matches!(
            load_feature_matrix(dir.path()),
            Err(Error::Malformed { .. })
        ));
    }

    #[test]
    fn full_scale_shape_is_accepted() {
        // 315,770 vectors of width 768, the size of the reference sampling.
        let m = MatrixManifest::new(315_770, 768, Source::new("fs", 1, TokenKind::Cls), None);
        assert_eq!(m.validate().unwrap(), 315_770 * 768 * 4);
    }

    #[test]
    fn source_tag() {
        assert_eq!(Source::new("vit/base", 4, TokenKind::Seq).tag(), "vit_base_L04_SEQ");
    }
}
