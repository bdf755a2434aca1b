//! Labeled synthetic feature matrices for tests, demos and smoke runs.

use ndarray::Array2;
use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{ensure, Result};
use crate::repr::{FeatureMatrix, RowMeta, Source, TokenKind};
use crate::rng::stage_rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Manifold {
    /// Isotropic Gaussian blobs whose centers are `separation · sigma` apart.
    Blobs {
        blobs: usize,
        points_per_blob: usize,
        separation: f64,
        sigma: f64,
    },
    /// Circle of the given radius in the first two coordinates.
    Ring { points: usize, radius: f64, noise: f64 },
    /// Segment of the given length along a random direction.
    Line { points: usize, length: f64, noise: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub manifold: Manifold,
    pub dim: usize,
    /// Number of layers; layer `l + 1` is layer `l` plus Gaussian noise.
    #[serde(default = "one")]
    pub layers: usize,
    #[serde(default)]
    pub layer_noise: f64,
    #[serde(default = "synth_model")]
    pub model: String,
}

fn one() -> usize {
    1
}

fn synth_model() -> String {
    "synth".into()
}

impl SynthSpec {
    pub fn blobs(blobs: usize, points_per_blob: usize, separation: f64, dim: usize) -> Self {
        Self {
            manifold: Manifold::Blobs {
                blobs,
                points_per_blob,
                separation,
                sigma: 1.0,
            },
            dim,
            layers: 1,
            layer_noise: 0.0,
            model: synth_model(),
        }
    }

    pub fn chain(mut self, layers: usize, layer_noise: f64) -> Self {
        self.layers = layers;
        self.layer_noise = layer_noise;
        self
    }

    fn validate(&self) -> Result<()> {
        ensure!(self.dim >= 1, "synthetic dimension must be >= 1");
        ensure!(self.layers >= 1, "need at least one layer");
        ensure!(
            self.layer_noise >= 0.0 && self.layer_noise.is_finite(),
            "layer noise must be finite and >= 0"
        );
        match self.manifold {
            Manifold::Blobs {
                blobs,
                points_per_blob,
                separation,
                sigma,
            } => {
                ensure!(blobs >= 1 && points_per_blob >= 1, "blob counts must be >= 1");
                ensure!(sigma > 0.0 && separation >= 0.0, "sigma must be > 0, separation >= 0");
            }
            Manifold::Ring { points, radius, noise } => {
                ensure!(points >= 3 && radius > 0.0 && noise >= 0.0, "invalid ring spec");
                ensure!(self.dim >= 2, "a ring needs at least 2 dimensions");
            }
            Manifold::Line { points, length, noise } => {
                ensure!(points >= 2 && length > 0.0 && noise >= 0.0, "invalid line spec");
            }
        }
        Ok(())
    }
}

fn gaussian<R: Rng>(rng: &mut R) -> f64 {
    Distribution::<f64>::sample(&StandardNormal, rng)
}

fn base_layer(spec: &SynthSpec, rng: &mut impl Rng) -> (Array2<f64>, Vec<i64>) {
    let dim = spec.dim;
    match spec.manifold {
        Manifold::Blobs {
            blobs,
            points_per_blob,
            separation,
            sigma,
        } => {
            let n = blobs * points_per_blob;
            let gap = separation * sigma;
            // Scaled basis vectors are pairwise `gap` apart; fall back to a line.
            let center = |b: usize, j: usize| {
                if blobs <= dim {
                    if j == b {
                        gap / std::f64::consts::SQRT_2
                    } else {
                        0.0
                    }
                } else if j == 0 {
                    b as f64 * gap
                } else {
                    0.0
                }
            };
            let mut x = Array2::zeros((n, dim));
            let mut labels = Vec::with_capacity(n);
            for i in 0..n {
                let b = i / points_per_blob;
                for j in 0..dim {
                    x[[i, j]] = center(b, j) + sigma * gaussian(rng);
                }
                labels.push(b as i64);
            }
            (x, labels)
        }
        Manifold::Ring { points, radius, noise } => {
            let mut x = Array2::zeros((points, dim));
            for i in 0..points {
                let t = rng.random::<f64>() * std::f64::consts::TAU;
                x[[i, 0]] = radius * t.cos();
                x[[i, 1]] = radius * t.sin();
                for j in 0..dim {
                    x[[i, j]] += noise * gaussian(rng);
                }
            }
            (x, vec![0; points])
        }
        Manifold::Line { points, length, noise } => {
            let mut dir: Vec<f64> = (0..dim).map(|_| gaussian(rng)).collect();
            let norm = dir.iter().map(|v| v * v).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
            dir.iter_mut().for_each(|v| *v /= norm);
            let mut x = Array2::zeros((points, dim));
            for i in 0..points {
                let t = rng.random::<f64>() * length;
                for j in 0..dim {
                    x[[i, j]] = t * dir[j] + noise * gaussian(rng);
                }
            }
            (x, vec![0; points])
        }
    }
}

/// One feature matrix per layer, with ground-truth labels in the class column.
pub fn generate_synthetic(spec: &SynthSpec, seed: u64) -> Result<Vec<FeatureMatrix>> {
    spec.validate()?;
    let mut rng = stage_rng(seed, "synth");
    let (mut x, labels) = base_layer(spec, &mut rng);
    let meta: Vec<RowMeta> = labels
        .iter()
        .enumerate()
        .map(|(i, &l)| RowMeta {
            class_label: Some(l),
            ..RowMeta::image(format!("s{i:06}"))
        })
        .collect();
    let noise = Normal::new(0.0, spec.layer_noise).expect("validated noise");
    let mut out = Vec::with_capacity(spec.layers);
    for layer in 1..=spec.layers {
        if layer > 1 {
            x.mapv_inplace(|v| v + noise.sample(&mut rng));
        }
        let source = Source::new(spec.model.clone(), layer as u32, TokenKind::Cls);
        out.push(FeatureMatrix::new(x.clone(), meta.clone(), source)?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::validity::twonn_id;

    #[test]
    fn blob_centers_are_separated() {
        let spec = SynthSpec::blobs(3, 50, 10.0, 5);
        let m = &generate_synthetic(&spec, 1).unwrap()[0];
        assert_eq!(m.n(), 150);
        let labels = m.class_labels().unwrap();
        let mean = |b: i64| {
            let rows: Vec<usize> = (0..150).filter(|&i| labels[i] == b).collect();
            m.data().select(ndarray::Axis(0), &rows).mean_axis(ndarray::Axis(0)).unwrap()
        };
        let d = (&mean(0) - &mean(1)).mapv(|v| v * v).sum().sqrt();
        assert!((d - 10.0).abs() < 1.5, "{d}");
    }

    #[test]
    fn chain_layers_share_meta_and_drift() {
        let spec = SynthSpec::blobs(2, 20, 5.0, 3).chain(4, 0.1);
        let layers = generate_synthetic(&spec, 2).unwrap();
        assert_eq!(layers.len(), 4);
        assert_eq!(layers[3].source().layer, 4);
        assert_eq!(layers[0].meta(), layers[3].meta());
        let drift = |a: usize, b: usize| (&layers[a].data() - &layers[b].data()).mapv(|v| v * v).sum();
        assert!(drift(0, 1) < drift(0, 3));
    }

    #[test]
    fn ring_has_dimension_one() {
        let spec = SynthSpec {
            manifold: Manifold::Ring {
                points: 2000,
                radius: 5.0,
                noise: 0.0,
            },
            dim: 20,
            layers: 1,
            layer_noise: 0.0,
            model: "ring".into(),
        };
        let m = &generate_synthetic(&spec, 3).unwrap()[0];
        let d = twonn_id(m.data()).unwrap();
        assert!((0.85..=1.15).contains(&d), "{d}");
    }

    #[test]
    fn degenerate_specs_rejected() {
        let mut spec = SynthSpec::blobs(0, 10, 5.0, 2);
        assert!(generate_synthetic(&spec, 0).is_err());
        spec = SynthSpec::blobs(2, 10, 5.0, 2).chain(0, 0.1);
        assert!(generate_synthetic(&spec, 0).is_err());
    }

    #[test]
    fn deterministic() {
        let spec = SynthSpec::blobs(2, 10, 5.0, 2).chain(2, 0.5);
        let a = generate_synthetic(&spec, 9).unwrap();
        let b = generate_synthetic(&spec, 9).unwrap();
        assert_eq!(a[1].data(), b[1].data());
    }
}
