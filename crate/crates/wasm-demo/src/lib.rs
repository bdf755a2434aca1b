//! Browser demo: concept discovery on 2-D blobs, alignment between two
//! drifted layers, and TWO-NN intrinsic dimension.

use serde::Serialize;
use wasm_bindgen::prelude::*;

use concept_align::align::{align, AlignParams, ConceptMatch};
use concept_align::density::{cluster_embedding, ClusterParams};
use concept_align::repr::{FeatureMatrix, SoftClustering};
use concept_align::synth::{generate_synthetic, Manifold, SynthSpec};
use concept_align::validity::twonn_id;
use concept_align::Result;

#[derive(Serialize)]
pub struct Layer {
    pub points: Vec<[f64; 2]>,
    pub labels: Vec<i32>,
    /// Largest membership per point.
    pub strength: Vec<f64>,
    pub k: usize,
    pub noise_rate: f64,
}

#[derive(Serialize)]
pub struct Comparison {
    pub a: Layer,
    pub b: Layer,
    pub cba: f64,
    pub matrix: Vec<Vec<f64>>,
    pub matches: Vec<ConceptMatch>,
}

fn spec(blobs: u32, per_blob: u32, separation: f64, layers: usize, drift: f64) -> SynthSpec {
    SynthSpec::blobs(blobs as usize, per_blob as usize, separation, 2).chain(layers, drift)
}

fn params(min_cluster_size: u32) -> ClusterParams {
    ClusterParams {
        min_cluster_size: min_cluster_size as usize,
        min_samples: (min_cluster_size as usize / 2).max(1),
    }
}

fn layer(m: &FeatureMatrix, c: &SoftClustering) -> Layer {
    Layer {
        points: m.data().outer_iter().map(|r| [r[0], r[1]]).collect(),
        labels: c.hard_labels.clone(),
        strength: c
            .memberships
            .outer_iter()
            .map(|r| r.iter().copied().fold(0.0, f64::max))
            .collect(),
        k: c.k(),
        noise_rate: c.noise_rate,
    }
}

pub fn discover_layer(blobs: u32, per_blob: u32, separation: f64, min_cluster_size: u32, seed: u32) -> Result<Layer> {
    let m = generate_synthetic(&spec(blobs, per_blob, separation, 1, 0.0), seed as u64)?.remove(0);
    let c = cluster_embedding(m.data(), &params(min_cluster_size), seed as u64)?.soft;
    Ok(layer(&m, &c))
}

pub fn compare_layers(
    blobs: u32,
    per_blob: u32,
    separation: f64,
    drift: f64,
    min_cluster_size: u32,
    seed: u32,
) -> Result<Comparison> {
    let layers = generate_synthetic(&spec(blobs, per_blob, separation, 2, drift), seed as u64)?;
    let p = params(min_cluster_size);
    let ca = cluster_embedding(layers[0].data(), &p, seed as u64)?.soft;
    let cb = cluster_embedding(layers[1].data(), &p, seed as u64)?.soft;
    let ap = AlignParams {
        sample_fraction: 1.0,
        seed: seed as u64,
        ..Default::default()
    };
    let report = align("layer 1", &ca, "layer 2", &cb, &ap)?;
    Ok(Comparison {
        a: layer(&layers[0], &ca),
        b: layer(&layers[1], &cb),
        cba: report.cba,
        matrix: report.concept_pair_matrix,
        matches: report.matches,
    })
}

pub fn estimate_dimension(manifold: &str, points: u32, dim: u32, seed: u32) -> Result<f64> {
    let n = points as usize;
    let manifold = match manifold {
        "ring" => Manifold::Ring {
            points: n,
            radius: 1.0,
            noise: 0.0,
        },
        "line" => Manifold::Line {
            points: n,
            length: 1.0,
            noise: 0.0,
        },
        _ => Manifold::Blobs {
            blobs: 1,
            points_per_blob: n,
            separation: 0.0,
            sigma: 1.0,
        },
    };
    let s = SynthSpec {
        manifold,
        dim: dim as usize,
        layers: 1,
        layer_noise: 0.0,
        model: "demo".into(),
    };
    twonn_id(generate_synthetic(&s, seed as u64)?[0].data())
}

fn js<T: Serialize>(r: Result<T>) -> Result<String, JsError> {
    let v = r.map_err(|e| JsError::new(&e.to_string()))?;
    serde_json::to_string(&v).map_err(|e| JsError::new(&e.to_string()))
}

/// Clusters 2-D Gaussian blobs; returns a JSON `Layer`.
#[wasm_bindgen]
pub fn discover(blobs: u32, per_blob: u32, separation: f64, min_cluster_size: u32, seed: u32) -> Result<String, JsError> {
    js(discover_layer(blobs, per_blob, separation, min_cluster_size, seed))
}

/// Clusters a layer and its drifted copy and aligns them; returns a JSON `Comparison`.
#[wasm_bindgen]
pub fn compare(
    blobs: u32,
    per_blob: u32,
    separation: f64,
    drift: f64,
    min_cluster_size: u32,
    seed: u32,
) -> Result<String, JsError> {
    js(compare_layers(blobs, per_blob, separation, drift, min_cluster_size, seed))
}

/// TWO-NN estimate for `ring`, `line` or `gaussian` points in `dim` dimensions.
#[wasm_bindgen]
pub fn intrinsic_dimension(manifold: &str, points: u32, dim: u32, seed: u32) -> Result<f64, JsError> {
    estimate_dimension(manifold, points, dim, seed).map_err(|e| JsError::new(&e.to_string()))
}
