use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::density::ClusterParams;
use crate::embed::EmbedParams;
use crate::error::{Error, Result};

/// Parameters and input provenance of the stages that produced an artifact.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embed: Option<EmbedParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cluster: Option<ClusterParams>,
    #[serde(default)]
    pub seeds: BTreeMap<String, u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subsample_fraction: Option<f64>,
    /// SHA-256 of each input file, keyed by a stable name.
    #[serde(default)]
    pub input_hashes: BTreeMap<String, String>,
}

impl RunManifest {
    pub fn with_input(mut self, name: impl Into<String>, hash: impl Into<String>) -> Self {
        self.input_hashes.insert(name.into(), hash.into());
        self
    }

    /// Content key over parameters and input hashes.
    pub fn content_hash(&self) -> String {
        // serde_json writes struct fields in declaration order and BTreeMaps sorted.
        hash_bytes(&serde_json::to_vec(self).expect("manifest serializes"))
    }
}

pub fn hash_bytes(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn hash_file(path: &Path) -> Result<String> {
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(hash_bytes(&bytes))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn json_roundtrip_is_lossless() {
        let m = RunManifest {
            embed: Some(EmbedParams::default()),
            cluster: Some(ClusterParams::default()),
            seeds: [("embed".to_string(), 3u64)].into(),
            subsample_fraction: Some(0.2),
            input_hashes: BTreeMap::new(),
        }
        .with_input("data.bin", "abc");
        let text = serde_json::to_string(&m).unwrap();
        let back: RunManifest = serde_json::from_str(&text).unwrap();
        assert_eq!(back, m);
        assert_eq!(back.content_hash(), m.content_hash());
    }
}
