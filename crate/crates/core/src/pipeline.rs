//! End-to-end run: embed → cluster → validate → align → sanity check.
//!
//! Every stage output is written under `<output_dir>/cache/<stage>-<key>/`,
//! where the key hashes the stage parameters and input file contents. An
//! existing complete directory is reused as is. Downstream stages always read
//! their inputs back from disk, so a cache hit and a fresh run see identical
//! bytes.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::align::{align, cba, crisp_to_membership, save_alignment, write_matrix_csv, AlignParams};
use crate::baselines::{kmeans_concepts, pca_concepts, sanity_check, save_sanity_table, SanityTable};
use crate::density::{cluster_embedding, ClusterParams, LAMBDA_PROXY_NOTE};
use crate::embed::{distance_fidelity_rmse, neighbor_embed, EmbedParams};
use crate::error::{ensure, Error, Result, StageContext};
use crate::par;
use crate::repr::{
    hash_bytes, hash_file, load_clustering, load_matrix_dir, save_clustering, save_matrix_dir,
    subsample, FeatureMatrix, RunManifest, SoftClustering, Source, SCHEMA_VERSION,
};
use crate::validity::{validity_report, ValidityReport};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Seeds {
    pub embed: u64,
    pub cluster: u64,
    pub subsample: u64,
    /// Seed of the second run used for the robustness score.
    pub robustness: u64,
    pub kmeans: u64,
}

impl Default for Seeds {
    fn default() -> Self {
        Self {
            embed: 0,
            cluster: 0,
            subsample: 0,
            robustness: 1,
            kmeans: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IdSpace {
    #[default]
    Original,
    Embedded,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BaselineConfig {
    pub enabled: bool,
    /// PCA components per layer; all available when unset.
    pub pca_components: Option<usize>,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        Self {
            enabled: true,
            pca_components: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    /// Matrix directories, one per representation.
    pub inputs: Vec<PathBuf>,
    pub output_dir: PathBuf,
    pub embed: EmbedParams,
    pub cluster: ClusterParams,
    /// `seed` here is replaced by `seeds.subsample`.
    pub align: AlignParams,
    pub seeds: Seeds,
    pub robustness: bool,
    pub baselines: BaselineConfig,
    pub intrinsic_dim_space: IdSpace,
    /// Points used for the distance-fidelity RMSE.
    pub fidelity_points: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            inputs: Vec::new(),
            output_dir: PathBuf::from("run"),
            embed: EmbedParams::default(),
            cluster: ClusterParams::default(),
            align: AlignParams::default(),
            seeds: Seeds::default(),
            robustness: true,
            baselines: BaselineConfig::default(),
            intrinsic_dim_space: IdSpace::Original,
            fidelity_points: 1000,
        }
    }
}

impl PipelineConfig {
    pub fn from_json_file(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(Error::MissingFile(path.to_path_buf()));
        }
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Malformed {
            what: "pipeline config",
            detail: e.to_string(),
        })
    }

    pub fn validate(&self) -> Result<()> {
        ensure!(!self.inputs.is_empty(), "pipeline config lists no inputs");
        ensure!(
            self.align.sample_fraction > 0.0 && self.align.sample_fraction <= 1.0,
            "sample fraction must be in (0, 1]"
        );
        ensure!(self.fidelity_points >= 2, "fidelity_points must be >= 2");
        for input in &self.inputs {
            let manifest = input.join("manifest.json");
            if !manifest.exists() {
                return Err(Error::MissingFile(manifest));
            }
        }
        Ok(())
    }

    fn embed_params(&self, seed: u64) -> EmbedParams {
        EmbedParams {
            seed,
            ..self.embed.clone()
        }
    }
}

/// Quality metrics of one representation's clustering, stored as `validity.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepresentationMetrics {
    pub validity: ValidityReport,
    pub intrinsic_dim_space: IdSpace,
    pub rmse: f64,
    pub robustness: Option<f64>,
    /// CBA against one-hot class labels, when every row has one.
    pub class_alignment: Option<f64>,
    /// CBA against one-hot token grid locations, when every row has one.
    pub location_alignment: Option<f64>,
    pub manifest: RunManifest,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepresentationEntry {
    pub tag: String,
    pub source: Source,
    pub n: usize,
    pub f: usize,
    pub k: usize,
    pub noise_rate: f64,
    pub embedding: String,
    pub clustering: String,
    pub metrics: RepresentationMetrics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairEntry {
    pub a: String,
    pub b: String,
    pub cba: f64,
    pub report: String,
}

/// Top-level `run.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunIndex {
    pub schema_version: u32,
    pub config_hash: String,
    pub representations: Vec<RepresentationEntry>,
    pub pairs: Vec<PairEntry>,
    /// Pairs not aligned because they do not cover the same points.
    pub skipped_pairs: Vec<(String, String)>,
    pub heatmaps: Vec<String>,
    pub sanity: Option<String>,
    pub manifest: RunManifest,
}

struct Loaded {
    tag: String,
    matrix: FeatureMatrix,
    input_hash: String,
}

struct Processed {
    loaded: Loaded,
    embedding_dir: PathBuf,
    clustering: SoftClustering,
    clustering_dir: PathBuf,
    metrics: RepresentationMetrics,
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let text = serde_json::to_string_pretty(value)? + "\n";
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn rel(root: &Path, p: &Path) -> String {
    p.strip_prefix(root).unwrap_or(p).to_string_lossy().replace('\\', "/")
}

fn cache_dir(root: &Path, stage: &str, m: &RunManifest) -> PathBuf {
    let key = m.content_hash();
    root.join("cache").join(format!("{stage}-{}", &key[..16]))
}

const DONE: &str = "done";

fn is_complete(dir: &Path) -> bool {
    dir.join(DONE).exists()
}

fn mark_complete(dir: &Path, m: &RunManifest) -> Result<()> {
    let path = dir.join(DONE);
    fs::write(&path, m.content_hash() + "\n").map_err(|e| Error::io(&path, e))
}

fn load_input(path: &Path) -> Result<Loaded> {
    let (matrix, _) = load_matrix_dir(path)?;
    let h = hash_bytes(
        format!(
            "{}{}",
            hash_file(&path.join("manifest.json"))?,
            hash_file(&path.join("data.bin"))?
        )
        .as_bytes(),
    );
    Ok(Loaded {
        tag: matrix.source().tag(),
        matrix,
        input_hash: h,
    })
}

/// Embeds, or reuses a cached embedding; returns the on-disk coordinates.
fn embed_stage(
    root: &Path,
    input: &Loaded,
    params: &EmbedParams,
) -> Result<(Array2<f64>, PathBuf, String)> {
    let mut m = RunManifest {
        embed: Some(params.clone()),
        ..Default::default()
    }
    .with_input("features", input.input_hash.clone());
    m.seeds.insert("embed".into(), params.seed);
    let dir = cache_dir(root, "embed", &m);
    if !is_complete(&dir) {
        let e = neighbor_embed(&input.matrix, params)?;
        save_matrix_dir(&dir, e.coords.view(), input.matrix.meta(), input.matrix.source(), Some(m.clone()))?;
        mark_complete(&dir, &m)?;
    }
    let (coords, _) = load_matrix_dir(&dir)?;
    let hash = hash_file(&dir.join("data.bin"))?;
    let (data, _, _) = coords.into_parts();
    Ok((data, dir, hash))
}

fn cluster_stage(
    root: &Path,
    embedding: ArrayView2<'_, f64>,
    embedding_hash: &str,
    params: &ClusterParams,
    seed: u64,
) -> Result<(SoftClustering, PathBuf)> {
    let mut m = RunManifest {
        cluster: Some(params.clone()),
        ..Default::default()
    }
    .with_input("embedding", embedding_hash);
    m.seeds.insert("cluster".into(), seed);
    let dir = cache_dir(root, "cluster", &m);
    if !is_complete(&dir) {
        let dc = cluster_embedding(embedding, params, seed)?;
        save_clustering(&dc.soft, &dir, Some(&m), &[LAMBDA_PROXY_NOTE.to_string()])?;
        mark_complete(&dir, &m)?;
    }
    let (c, _) = load_clustering(&dir)?;
    Ok((c, dir))
}

fn crisp_alignment(c: &SoftClustering, labels: Option<Vec<i64>>, sample: &[usize]) -> Result<Option<f64>> {
    match labels {
        Some(l) if l.iter().all(|&v| v >= 0) => {
            let m = crisp_to_membership(&l)?;
            Ok(Some(cba(c.memberships.view(), m.view(), sample)?))
        }
        _ => Ok(None),
    }
}

fn process(cfg: &PipelineConfig, root: &Path, input: Loaded) -> Result<Processed> {
    let tag = input.tag.clone();
    let n = input.matrix.n();
    let (embedding, embedding_dir, emb_hash) =
        embed_stage(root, &input, &cfg.embed_params(cfg.seeds.embed)).stage(format!("embed {tag}"))?;
    let (clustering, clustering_dir) =
        cluster_stage(root, embedding.view(), &emb_hash, &cfg.cluster, cfg.seeds.cluster)
            .stage(format!("cluster {tag}"))?;

    let metrics = (|| -> Result<RepresentationMetrics> {
        let sample = subsample(n, cfg.align.sample_fraction, cfg.seeds.subsample)?;
        let original = match cfg.intrinsic_dim_space {
            IdSpace::Original => input.matrix.data(),
            IdSpace::Embedded => embedding.view(),
        };
        let validity = validity_report(embedding.view(), original, &clustering.hard_labels, clustering.k())?;
        let fraction = (cfg.fidelity_points as f64 / n as f64).min(1.0);
        let fidelity_sample = subsample(n, fraction, cfg.seeds.subsample)?;
        let rmse = distance_fidelity_rmse(input.matrix.data(), embedding.view(), &fidelity_sample)?;
        let robustness = if cfg.robustness {
            let seed = cfg.seeds.robustness;
            let (emb2, _, h2) = embed_stage(root, &input, &cfg.embed_params(seed))?;
            let (c2, _) = cluster_stage(root, emb2.view(), &h2, &cfg.cluster, seed)?;
            Some(cba(clustering.memberships.view(), c2.memberships.view(), &sample)?)
        } else {
            None
        };
        let class_alignment = crisp_alignment(&clustering, input.matrix.class_labels(), &sample)?;
        let grid: Option<Vec<i64>> = input
            .matrix
            .meta()
            .iter()
            .map(|m| m.grid_label().map(|g| g as i64))
            .collect();
        let location_alignment = crisp_alignment(&clustering, grid, &sample)?;

        let mut manifest = RunManifest {
            embed: Some(cfg.embed_params(cfg.seeds.embed)),
            cluster: Some(cfg.cluster.clone()),
            subsample_fraction: Some(cfg.align.sample_fraction),
            ..Default::default()
        }
        .with_input("features", input.input_hash.clone())
        .with_input("embedding", emb_hash.clone())
        .with_input("memberships", hash_file(&clustering_dir.join("memberships.bin"))?);
        manifest.seeds = BTreeMap::from([
            ("embed".to_string(), cfg.seeds.embed),
            ("cluster".to_string(), cfg.seeds.cluster),
            ("subsample".to_string(), cfg.seeds.subsample),
            ("robustness".to_string(), cfg.seeds.robustness),
        ]);
        let metrics = RepresentationMetrics {
            validity,
            intrinsic_dim_space: cfg.intrinsic_dim_space,
            rmse,
            robustness,
            class_alignment,
            location_alignment,
            manifest,
        };
        write_json(&clustering_dir.join("validity.json"), &metrics)?;
        Ok(metrics)
    })()
    .stage(format!("validate {tag}"))?;

    Ok(Processed {
        loaded: input,
        embedding_dir,
        clustering,
        clustering_dir,
        metrics,
    })
}

fn same_points(a: &FeatureMatrix, b: &FeatureMatrix) -> bool {
    a.n() == b.n()
        && a.meta()
            .iter()
            .zip(b.meta())
            .all(|(x, y)| x.image_id == y.image_id)
}

/// Representations grouped by model and token kind, each sorted by layer.
fn layer_groups(reps: &[Processed]) -> BTreeMap<String, Vec<usize>> {
    let mut groups: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    for (i, r) in reps.iter().enumerate() {
        let s = r.loaded.matrix.source();
        let name = Source::new(s.model.clone(), 0, s.token_kind).tag().replace("_L00", "");
        groups.entry(name).or_default().push(i);
    }
    for v in groups.values_mut() {
        v.sort_by_key(|&i| reps[i].loaded.matrix.source().layer);
    }
    groups
}

/// Runs the full pipeline and writes `run.json` under `cfg.output_dir`.
pub fn run_pipeline(cfg: &PipelineConfig) -> Result<RunIndex> {
    cfg.validate().stage("config")?;
    let root = cfg.output_dir.clone();
    fs::create_dir_all(&root).map_err(|e| Error::io(&root, e)).stage("config")?;
    let config_hash = hash_bytes(&serde_json::to_vec(&PipelineConfig {
        output_dir: PathBuf::new(),
        ..cfg.clone()
    })?);

    let mut loaded = Vec::with_capacity(cfg.inputs.len());
    for p in &cfg.inputs {
        loaded.push(load_input(p).stage(format!("load {}", p.display()))?);
    }
    let mut tags: Vec<&str> = loaded.iter().map(|l| l.tag.as_str()).collect();
    tags.sort_unstable();
    if let Some(w) = tags.windows(2).find(|w| w[0] == w[1]) {
        return Err(Error::Validation(format!("representation {} listed twice", w[0]))).stage("config");
    }

    let mut slots: Vec<Option<Loaded>> = loaded.into_iter().map(Some).collect();
    let cells: Vec<std::sync::Mutex<Option<Loaded>>> =
        slots.iter_mut().map(|s| std::sync::Mutex::new(s.take())).collect();
    let results = par::map_slice(&cells, |cell| {
        let input = cell.lock().expect("unpoisoned").take().expect("taken once");
        process(cfg, &root, input)
    });
    let reps = results.into_iter().collect::<Result<Vec<_>>>()?;

    let mut pair_list = Vec::new();
    let mut skipped_pairs = Vec::new();
    for a in 0..reps.len() {
        for b in a + 1..reps.len() {
            if same_points(&reps[a].loaded.matrix, &reps[b].loaded.matrix) {
                pair_list.push((a, b));
            } else {
                skipped_pairs.push((reps[a].loaded.tag.clone(), reps[b].loaded.tag.clone()));
            }
        }
    }
    let align_params = AlignParams {
        seed: cfg.seeds.subsample,
        ..cfg.align.clone()
    };
    let pair_results = par::map_slice(&pair_list, |&(a, b)| {
        let (ra, rb) = (&reps[a], &reps[b]);
        let (ta, tb) = (&ra.loaded.tag, &rb.loaded.tag);
        (|| -> Result<PairEntry> {
            let mut report = align(ta, &ra.clustering, tb, &rb.clustering, &align_params)?;
            let mut m = RunManifest {
                subsample_fraction: Some(align_params.sample_fraction),
                ..Default::default()
            }
            .with_input(format!("{ta}/memberships"), hash_file(&ra.clustering_dir.join("memberships.bin"))?)
            .with_input(format!("{tb}/memberships"), hash_file(&rb.clustering_dir.join("memberships.bin"))?);
            m.seeds.insert("subsample".into(), align_params.seed);
            report.manifest = Some(m);
            let path = root.join("pairs").join(format!("{ta}__{tb}.json"));
            fs::create_dir_all(root.join("pairs")).map_err(|e| Error::io(root.join("pairs"), e))?;
            save_alignment(&path, &report)?;
            Ok(PairEntry {
                a: ta.clone(),
                b: tb.clone(),
                cba: report.cba,
                report: rel(&root, &path),
            })
        })()
        .stage(format!("align {ta} vs {tb}"))
    });
    let pairs = pair_results.into_iter().collect::<Result<Vec<_>>>()?;
    let pair_cba: BTreeMap<(usize, usize), f64> =
        pair_list.iter().zip(&pairs).map(|(&k, p)| (k, p.cba)).collect();

    let groups = layer_groups(&reps);
    let mut heatmaps = Vec::new();
    for (name, members) in &groups {
        if members.len() < 2 || !members.windows(2).all(|w| {
            let (a, b) = (w[0].min(w[1]), w[0].max(w[1]));
            pair_cba.contains_key(&(a, b))
        }) {
            continue;
        }
        let l = members.len();
        let m = Array2::from_shape_fn((l, l), |(x, y)| {
            let (a, b) = (members[x].min(members[y]), members[x].max(members[y]));
            if a == b {
                1.0
            } else {
                pair_cba.get(&(a, b)).copied().unwrap_or(f64::NAN)
            }
        });
        let names: Vec<String> = members
            .iter()
            .map(|&i| format!("L{:02}", reps[i].loaded.matrix.source().layer))
            .collect();
        let path = root.join("heatmaps").join(format!("{name}.csv"));
        fs::create_dir_all(root.join("heatmaps")).map_err(|e| Error::io(root.join("heatmaps"), e))?;
        write_matrix_csv(&path, &names, &names, &m).stage(format!("heatmap {name}"))?;
        heatmaps.push(rel(&root, &path));
    }

    let mut table = SanityTable::new();
    let mut any_sanity = false;
    for (name, members) in &groups {
        if members.len() < 3 {
            continue;
        }
        let first = &reps[members[0]].loaded.matrix;
        if !members.iter().all(|&i| same_points(first, &reps[i].loaded.matrix)) {
            continue;
        }
        (|| -> Result<()> {
            let sample = subsample(first.n(), cfg.align.sample_fraction, cfg.seeds.subsample)?;
            let nlmcd: Vec<SoftClustering> = members.iter().map(|&i| reps[i].clustering.clone()).collect();
            table.push(name, &sanity_check(&nlmcd, &sample, "nlmcd")?);
            if cfg.baselines.enabled {
                let pca = par::map_slice(members, |&i| {
                    let x = reps[i].loaded.matrix.data();
                    let full = x.nrows().min(x.ncols());
                    pca_concepts(x, cfg.baselines.pca_components.unwrap_or(full).min(full))
                })
                .into_iter()
                .collect::<Result<Vec<_>>>()?;
                table.push(name, &sanity_check(&pca, &sample, "pca")?);
                let km = par::map_slice(members, |&i| {
                    kmeans_concepts(reps[i].loaded.matrix.data(), reps[i].clustering.k(), cfg.seeds.kmeans)
                })
                .into_iter()
                .collect::<Result<Vec<_>>>()?;
                table.push(name, &sanity_check(&km, &sample, "kmeans")?);
            }
            Ok(())
        })()
        .stage(format!("sanity {name}"))?;
        any_sanity = true;
    }
    let mut manifest = RunManifest {
        embed: Some(cfg.embed_params(cfg.seeds.embed)),
        cluster: Some(cfg.cluster.clone()),
        subsample_fraction: Some(cfg.align.sample_fraction),
        ..Default::default()
    };
    manifest.seeds = BTreeMap::from([
        ("embed".to_string(), cfg.seeds.embed),
        ("cluster".to_string(), cfg.seeds.cluster),
        ("subsample".to_string(), cfg.seeds.subsample),
        ("robustness".to_string(), cfg.seeds.robustness),
        ("kmeans".to_string(), cfg.seeds.kmeans),
    ]);
    for r in &reps {
        manifest
            .input_hashes
            .insert(r.loaded.tag.clone(), r.loaded.input_hash.clone());
    }
    table.manifest = Some(manifest.clone());
    let sanity = if any_sanity {
        let path = root.join("sanity.json");
        save_sanity_table(&path, &table).stage("sanity")?;
        Some(rel(&root, &path))
    } else {
        None
    };

    let representations = reps
        .iter()
        .map(|r| RepresentationEntry {
            tag: r.loaded.tag.clone(),
            source: r.loaded.matrix.source().clone(),
            n: r.loaded.matrix.n(),
            f: r.loaded.matrix.f(),
            k: r.clustering.k(),
            noise_rate: r.clustering.noise_rate,
            embedding: rel(&root, &r.embedding_dir),
            clustering: rel(&root, &r.clustering_dir),
            metrics: r.metrics.clone(),
        })
        .collect();
    let index = RunIndex {
        schema_version: SCHEMA_VERSION,
        config_hash,
        representations,
        pairs,
        skipped_pairs,
        heatmaps,
        sanity,
        manifest,
    };
    write_json(&root.join("run.json"), &index).stage("report")?;
    Ok(index)
}
