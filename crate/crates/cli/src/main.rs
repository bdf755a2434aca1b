use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use concept_align::align::{align, save_alignment, write_matrix_csv, AlignParams};
use concept_align::analysis::{
    assign_tokens, build_cfg, concept_atlas, concept_categories, load_category_map, save_graph,
    transition_matrix, write_atlas_csv, AtlasParams, ConceptNode, DEFAULT_ASSIGNMENT_THRESHOLD,
    DEFAULT_CONTRIBUTION_THRESHOLD,
};
use concept_align::baselines::{kmeans_concepts, pca_concepts, sanity_check, save_sanity_table, SanityTable};
use concept_align::density::{cluster_embedding, ClusterParams, LAMBDA_PROXY_NOTE};
use concept_align::embed::{distance_fidelity_rmse, neighbor_embed, EmbedParams};
use concept_align::pipeline::{run_pipeline, IdSpace, PipelineConfig};
use concept_align::repr::{
    hash_file, load_clustering, load_matrix_dir, save_clustering, save_feature_matrix, save_matrix_dir,
    subsample, RunManifest, SoftClustering,
};
use concept_align::synth::{generate_synthetic, Manifold, SynthSpec};
use concept_align::validity::{validity_report, ValidityReport};

const WORKERS_ENV: &str = "CBA_WORKERS";

#[derive(Parser)]
#[command(name = "concept-align", version, about = "Concept discovery and concept-based alignment")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Neighbor-embed a feature matrix directory.
    Embed(EmbedArgs),
    /// Density-cluster an embedding into soft concept memberships.
    Cluster(ClusterArgs),
    /// DBCV, intrinsic dimension, noise rate, and optionally RMSE and robustness.
    Validate(ValidateArgs),
    /// CBA, concept-pair matrix and Hungarian matches between two clusterings.
    Align(AlignArgs),
    /// 2-D concept atlas of one clustering.
    Atlas(AtlasArgs),
    /// Concept formation graph across consecutive layers.
    Cfg(CfgArgs),
    /// Neighboring-layer sanity check for NLMCD, PCA and KMeans concepts.
    Sanity(SanityArgs),
    /// Full run: embed, cluster, validate, align, heatmaps, sanity check.
    Pipeline(PipelineArgs),
    /// Write synthetic labeled feature matrices.
    Synth(SynthArgs),
}

/// Reads a JSON config, or the defaults when no path is given.
fn read_config<T: DeserializeOwned + Default>(path: Option<&Path>) -> Result<T> {
    let Some(path) = path else {
        return Ok(T::default());
    };
    if !path.exists() {
        return Err(concept_align::Error::MissingFile(path.to_path_buf()).into());
    }
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).map_err(|e| {
        concept_align::Error::Malformed {
            what: "config",
            detail: format!("{}: {e}", path.display()),
        }
        .into()
    })
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
    }
    let text = serde_json::to_string_pretty(value)? + "\n";
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

macro_rules! set {
    ($target:expr, $flag:expr) => {
        if let Some(v) = $flag.clone() {
            $target = v;
        }
    };
}

#[derive(Args, Clone, Default)]
struct EmbedFlags {
    /// Embedding dimension.
    #[arg(long)]
    dim: Option<usize>,
    #[arg(long)]
    n_neighbors: Option<usize>,
    #[arg(long)]
    min_dist: Option<f64>,
    #[arg(long)]
    spread: Option<f64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    negative_sample_rate: Option<usize>,
}

impl EmbedFlags {
    fn apply(&self, p: &mut EmbedParams) {
        set!(p.dim, self.dim);
        set!(p.n_neighbors, self.n_neighbors);
        set!(p.min_dist, self.min_dist);
        set!(p.spread, self.spread);
        set!(p.epochs, self.epochs);
        set!(p.negative_sample_rate, self.negative_sample_rate);
    }
}

#[derive(Args, Clone, Default)]
struct ClusterFlags {
    #[arg(long)]
    min_cluster_size: Option<usize>,
    /// Neighbor rank used for core distances.
    #[arg(long)]
    min_samples: Option<usize>,
}

impl ClusterFlags {
    fn apply(&self, p: &mut ClusterParams) {
        set!(p.min_cluster_size, self.min_cluster_size);
        set!(p.min_samples, self.min_samples);
    }
}

#[derive(Args, Clone, Default)]
struct AlignFlags {
    /// Fraction of points used for CBA.
    #[arg(long)]
    sample_fraction: Option<f64>,
    /// Cap on the points used for the concept-pair matrix.
    #[arg(long)]
    pair_matrix_points: Option<usize>,
}

impl AlignFlags {
    fn apply(&self, p: &mut AlignParams) {
        set!(p.sample_fraction, self.sample_fraction);
        set!(p.pair_matrix_points, self.pair_matrix_points);
    }
}

#[derive(Args)]
struct EmbedArgs {
    /// Feature matrix directory.
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    output: PathBuf,
    /// JSON file with embedding parameters; flags win.
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    params: EmbedFlags,
    #[arg(long)]
    seed: Option<u64>,
}

fn cmd_embed(a: EmbedArgs) -> Result<()> {
    let mut params: EmbedParams = read_config(a.config.as_deref())?;
    a.params.apply(&mut params);
    set!(params.seed, a.seed);
    let (m, _) = load_matrix_dir(&a.input)?;
    let e = neighbor_embed(&m, &params)?;
    let mut manifest = RunManifest {
        embed: Some(params.clone()),
        ..Default::default()
    }
    .with_input("features", hash_file(&a.input.join("data.bin"))?);
    manifest.seeds.insert("embed".into(), params.seed);
    save_matrix_dir(&a.output, e.coords.view(), m.meta(), m.source(), Some(manifest))?;
    println!("embedded {} points into {} dimensions: {}", e.n(), e.dim(), a.output.display());
    Ok(())
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(default)]
struct ClusterConfig {
    #[serde(flatten)]
    params: ClusterParams,
    seed: u64,
}

#[derive(Args)]
struct ClusterArgs {
    /// Embedding directory (matrix format).
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    output: PathBuf,
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    params: ClusterFlags,
    #[arg(long)]
    seed: Option<u64>,
}

fn cmd_cluster(a: ClusterArgs) -> Result<()> {
    let mut cfg: ClusterConfig = read_config(a.config.as_deref())?;
    a.params.apply(&mut cfg.params);
    set!(cfg.seed, a.seed);
    let (m, _) = load_matrix_dir(&a.input)?;
    let dc = cluster_embedding(m.data(), &cfg.params, cfg.seed)?;
    let mut manifest = RunManifest {
        cluster: Some(cfg.params.clone()),
        ..Default::default()
    }
    .with_input("embedding", hash_file(&a.input.join("data.bin"))?);
    manifest.seeds.insert("cluster".into(), cfg.seed);
    save_clustering(&dc.soft, &a.output, Some(&manifest), &[LAMBDA_PROXY_NOTE.to_string()])?;
    println!(
        "{} concepts, noise rate {:.4}: {}",
        dc.soft.k(),
        dc.soft.noise_rate,
        a.output.display()
    );
    Ok(())
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(default)]
struct ValidateConfig {
    intrinsic_dim_space: IdSpace,
    fidelity_points: usize,
    sample_fraction: f64,
    seed: u64,
}

impl Default for ValidateConfig {
    fn default() -> Self {
        Self {
            intrinsic_dim_space: IdSpace::Original,
            fidelity_points: 1000,
            sample_fraction: 0.2,
            seed: 0,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum IdSpaceArg {
    Original,
    Embedded,
}

#[derive(Args)]
struct ValidateArgs {
    #[arg(long)]
    embedding: PathBuf,
    #[arg(long)]
    clustering: PathBuf,
    /// Original features; enables RMSE and original-space intrinsic dimension.
    #[arg(long)]
    features: Option<PathBuf>,
    /// Second clustering of the same points; enables the robustness score.
    #[arg(long)]
    other: Option<PathBuf>,
    /// Defaults to `validity.json` inside the clustering directory.
    #[arg(long)]
    output: Option<PathBuf>,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_enum)]
    id_space: Option<IdSpaceArg>,
    #[arg(long)]
    fidelity_points: Option<usize>,
    #[arg(long)]
    sample_fraction: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Serialize)]
struct ValidateOutput {
    validity: ValidityReport,
    intrinsic_dim_space: IdSpace,
    rmse: Option<f64>,
    robustness: Option<f64>,
    manifest: RunManifest,
}

fn cmd_validate(a: ValidateArgs) -> Result<()> {
    let mut cfg: ValidateConfig = read_config(a.config.as_deref())?;
    if let Some(s) = a.id_space {
        cfg.intrinsic_dim_space = match s {
            IdSpaceArg::Original => IdSpace::Original,
            IdSpaceArg::Embedded => IdSpace::Embedded,
        };
    }
    set!(cfg.fidelity_points, a.fidelity_points);
    set!(cfg.sample_fraction, a.sample_fraction);
    set!(cfg.seed, a.seed);

    let (emb, _) = load_matrix_dir(&a.embedding)?;
    let (c, _) = load_clustering(&a.clustering)?;
    let features = a.features.as_deref().map(load_matrix_dir).transpose()?.map(|(m, _)| m);
    if cfg.intrinsic_dim_space == IdSpace::Original && features.is_none() {
        bail!(concept_align::Error::Validation(
            "original-space intrinsic dimension needs --features (or --id-space embedded)".into()
        ));
    }
    let original = match (&features, cfg.intrinsic_dim_space) {
        (Some(f), IdSpace::Original) => f.data(),
        _ => emb.data(),
    };
    let validity = validity_report(emb.data(), original, &c.hard_labels, c.k())?;
    let n = emb.n();
    let rmse = match &features {
        Some(f) => {
            let fraction = (cfg.fidelity_points as f64 / n as f64).min(1.0);
            Some(distance_fidelity_rmse(f.data(), emb.data(), &subsample(n, fraction, cfg.seed)?)?)
        }
        None => None,
    };
    let robustness = match &a.other {
        Some(dir) => {
            let (c2, _) = load_clustering(dir)?;
            let sample = subsample(n, cfg.sample_fraction, cfg.seed)?;
            Some(concept_align::align::robustness(&c, &c2, &sample)?)
        }
        None => None,
    };
    let mut manifest = RunManifest {
        subsample_fraction: Some(cfg.sample_fraction),
        ..Default::default()
    }
    .with_input("embedding", hash_file(&a.embedding.join("data.bin"))?)
    .with_input("memberships", hash_file(&a.clustering.join("memberships.bin"))?);
    manifest.seeds.insert("subsample".into(), cfg.seed);
    let out = ValidateOutput {
        validity,
        intrinsic_dim_space: cfg.intrinsic_dim_space,
        rmse,
        robustness,
        manifest,
    };
    let path = a.output.unwrap_or_else(|| a.clustering.join("validity.json"));
    write_json(&path, &out)?;
    match &out.validity.dbcv {
        Some(d) => println!("DBCV {:.4}", d.mean),
        None => println!("DBCV undefined: {}", out.validity.dbcv_error.as_deref().unwrap_or("")),
    }
    println!("noise rate {:.4}", out.validity.noise_rate);
    if let Some(id) = out.validity.mean_intrinsic_dim {
        println!("mean intrinsic dimension {id:.3}");
    }
    if let Some(r) = out.rmse {
        println!("RMSE {r:.4}");
    }
    if let Some(r) = out.robustness {
        println!("robustness {r:.4}");
    }
    Ok(())
}

#[derive(Args)]
struct AlignArgs {
    /// First clustering directory.
    #[arg(long)]
    a: PathBuf,
    /// Second clustering directory.
    #[arg(long)]
    b: PathBuf,
    #[arg(long)]
    output: PathBuf,
    /// Also write the concept-pair matrix as CSV.
    #[arg(long)]
    matrix_csv: Option<PathBuf>,
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    params: AlignFlags,
    #[arg(long)]
    seed: Option<u64>,
}

fn dir_name(p: &Path) -> String {
    p.file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| p.display().to_string())
}

fn cmd_align(a: AlignArgs) -> Result<()> {
    let mut params: AlignParams = read_config(a.config.as_deref())?;
    a.params.apply(&mut params);
    set!(params.seed, a.seed);
    let (p, _) = load_clustering(&a.a)?;
    let (q, _) = load_clustering(&a.b)?;
    let (na, nb) = (dir_name(&a.a), dir_name(&a.b));
    let mut report = align(&na, &p, &nb, &q, &params)?;
    let mut manifest = RunManifest {
        subsample_fraction: Some(params.sample_fraction),
        ..Default::default()
    }
    .with_input(format!("{na}/memberships"), hash_file(&a.a.join("memberships.bin"))?)
    .with_input(format!("{nb}/memberships"), hash_file(&a.b.join("memberships.bin"))?);
    manifest.seeds.insert("subsample".into(), params.seed);
    report.manifest = Some(manifest);
    save_alignment(&a.output, &report)?;
    if let Some(csv) = &a.matrix_csv {
        let rows: Vec<String> = (0..p.k()).map(|i| format!("{na}:{i}")).collect();
        let cols: Vec<String> = (0..q.k()).map(|i| format!("{nb}:{i}")).collect();
        write_matrix_csv(csv, &rows, &cols, &report.matrix())?;
    }
    println!("CBA {:.6} (d_cross {:.6}, {} points)", report.cba, report.d_cross, report.sample_size);
    Ok(())
}

#[derive(Args)]
struct AtlasArgs {
    #[arg(long)]
    clustering: PathBuf,
    /// CSV output: concept, x, y, category, representatives.
    #[arg(long)]
    output: PathBuf,
    /// Feature matrix of the same points, for class labels and token references.
    #[arg(long)]
    features: Option<PathBuf>,
    /// `class_label,category` CSV; needs --features.
    #[arg(long)]
    categories: Option<PathBuf>,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    n_neighbors: Option<usize>,
    #[arg(long)]
    min_dist: Option<f64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    representatives: Option<usize>,
    #[command(flatten)]
    align: AlignFlags,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(default)]
struct AtlasConfig {
    atlas: AtlasParams,
    align: AlignParams,
}

fn cmd_atlas(a: AtlasArgs) -> Result<()> {
    let mut cfg: AtlasConfig = read_config(a.config.as_deref())?;
    set!(cfg.atlas.n_neighbors, a.n_neighbors);
    set!(cfg.atlas.min_dist, a.min_dist);
    set!(cfg.atlas.epochs, a.epochs);
    set!(cfg.atlas.representatives, a.representatives);
    a.align.apply(&mut cfg.align);
    if let Some(s) = a.seed {
        cfg.atlas.seed = s;
        cfg.align.seed = s;
    }
    let (c, _) = load_clustering(&a.clustering)?;
    let features = a.features.as_deref().map(load_matrix_dir).transpose()?.map(|(m, _)| m);
    if let Some(f) = &features {
        if f.n() != c.n() {
            bail!(concept_align::Error::SizeMismatch(format!(
                "features have {} rows, clustering {}",
                f.n(),
                c.n()
            )));
        }
    }
    let categories = match (&a.categories, &features) {
        (Some(path), Some(f)) => {
            let map = load_category_map(path)?;
            let labels = f.class_labels().ok_or_else(|| {
                concept_align::Error::Validation("features lack class labels for the category vote".into())
            })?;
            Some(concept_categories(&c, &labels, &map)?)
        }
        (Some(_), None) => bail!(concept_align::Error::Validation("--categories needs --features".into())),
        _ => None,
    };
    let name = dir_name(&a.clustering);
    let pair = align(&name, &c, &name, &c, &cfg.align)?.matrix();
    let atlas = concept_atlas(pair.view(), categories, &c.members(), &cfg.atlas)?;
    write_atlas_csv(&a.output, &atlas, features.as_ref().map(|f| f.meta()))?;
    println!("atlas of {} concepts: {}", atlas.coords.len(), a.output.display());
    Ok(())
}

#[derive(Args)]
struct CfgArgs {
    /// Clustering directories of consecutive layers, first layer first.
    #[arg(long, num_args = 2.., required = true)]
    clusterings: Vec<PathBuf>,
    /// 1-based position of the target layer in --clusterings.
    #[arg(long)]
    target_layer: usize,
    #[arg(long)]
    target_concept: usize,
    #[arg(long)]
    output: PathBuf,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    assignment_threshold: Option<f64>,
    #[arg(long)]
    contribution_threshold: Option<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(default)]
struct CfgConfig {
    assignment_threshold: f64,
    contribution_threshold: f64,
}

impl Default for CfgConfig {
    fn default() -> Self {
        Self {
            assignment_threshold: DEFAULT_ASSIGNMENT_THRESHOLD,
            contribution_threshold: DEFAULT_CONTRIBUTION_THRESHOLD,
        }
    }
}

fn cmd_cfg(a: CfgArgs) -> Result<()> {
    let mut cfg: CfgConfig = read_config(a.config.as_deref())?;
    set!(cfg.assignment_threshold, a.assignment_threshold);
    set!(cfg.contribution_threshold, a.contribution_threshold);
    let assignments = a
        .clusterings
        .iter()
        .map(|d| {
            let (c, _) = load_clustering(d)?;
            Ok(assign_tokens(&c, cfg.assignment_threshold)?)
        })
        .collect::<Result<Vec<_>>>()?;
    let transitions = assignments
        .windows(2)
        .map(|w| transition_matrix(&w[0], &w[1]))
        .collect::<concept_align::Result<Vec<_>>>()?;
    let target = ConceptNode {
        layer: a.target_layer,
        concept: a.target_concept,
    };
    let mut graph = build_cfg(target, &transitions, cfg.contribution_threshold)?;
    graph.assignment_threshold = Some(cfg.assignment_threshold);
    save_graph(&a.output, &graph)?;
    println!("{} nodes, {} edges: {}", graph.nodes.len(), graph.edges.len(), a.output.display());
    Ok(())
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Baseline {
    Pca,
    Kmeans,
}

#[derive(Args)]
struct SanityArgs {
    /// NLMCD clustering directories, one per layer, in layer order.
    #[arg(long, num_args = 1..)]
    clusterings: Vec<PathBuf>,
    /// Feature matrix directories, one per layer, for the baselines.
    #[arg(long, num_args = 1..)]
    features: Vec<PathBuf>,
    #[arg(long, value_enum, num_args = 1..)]
    baselines: Vec<Baseline>,
    #[arg(long)]
    pca_components: Option<usize>,
    /// KMeans concept count; defaults to each layer's NLMCD count.
    #[arg(long)]
    k: Option<usize>,
    /// Model name in the output table.
    #[arg(long, default_value = "model")]
    model: String,
    #[arg(long)]
    output: PathBuf,
    #[arg(long)]
    sample_fraction: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(default)]
struct SanityConfig {
    sample_fraction: f64,
    seed: u64,
    pca_components: Option<usize>,
    k: Option<usize>,
}

impl Default for SanityConfig {
    fn default() -> Self {
        Self {
            sample_fraction: 0.2,
            seed: 0,
            pca_components: None,
            k: None,
        }
    }
}

fn cmd_sanity(a: SanityArgs) -> Result<()> {
    let mut cfg: SanityConfig = read_config(a.config.as_deref())?;
    set!(cfg.sample_fraction, a.sample_fraction);
    set!(cfg.seed, a.seed);
    if a.pca_components.is_some() {
        cfg.pca_components = a.pca_components;
    }
    if a.k.is_some() {
        cfg.k = a.k;
    }
    if a.clusterings.is_empty() && a.features.is_empty() {
        bail!(concept_align::Error::Validation("give --clusterings and/or --features".into()));
    }
    if !a.baselines.is_empty() && a.features.is_empty() {
        bail!(concept_align::Error::Validation("baselines need --features".into()));
    }
    let nlmcd: Vec<SoftClustering> = a
        .clusterings
        .iter()
        .map(|d| load_clustering(d).map(|(c, _)| c))
        .collect::<concept_align::Result<_>>()?;
    let features = a
        .features
        .iter()
        .map(|d| load_matrix_dir(d).map(|(m, _)| m))
        .collect::<concept_align::Result<Vec<_>>>()?;
    let n = nlmcd
        .first()
        .map(SoftClustering::n)
        .or_else(|| features.first().map(|f| f.n()))
        .expect("checked non-empty");
    let sample = subsample(n, cfg.sample_fraction, cfg.seed)?;
    let mut table = SanityTable::new();
    let report = |t: &mut SanityTable, r: concept_align::baselines::SanityResult| {
        println!("{:<8} ratio {:.3}  most aligned {:?}", r.method, r.ratio, r.most_aligned);
        t.push(&a.model, &r);
    };
    if !nlmcd.is_empty() {
        report(&mut table, sanity_check(&nlmcd, &sample, "nlmcd")?);
    }
    if a.baselines.contains(&Baseline::Pca) {
        let layers = features
            .iter()
            .map(|f| {
                let full = f.n().min(f.f());
                pca_concepts(f.data(), cfg.pca_components.unwrap_or(full).min(full))
            })
            .collect::<concept_align::Result<Vec<_>>>()?;
        report(&mut table, sanity_check(&layers, &sample, "pca")?);
    }
    if a.baselines.contains(&Baseline::Kmeans) {
        let layers = features
            .iter()
            .enumerate()
            .map(|(i, f)| {
                let k = match (cfg.k, nlmcd.get(i)) {
                    (Some(k), _) => k,
                    (None, Some(c)) => c.k(),
                    (None, None) => {
                        return Err(concept_align::Error::Validation(
                            "KMeans needs --k or matching --clusterings".into(),
                        ))
                    }
                };
                kmeans_concepts(f.data(), k, cfg.seed)
            })
            .collect::<concept_align::Result<Vec<_>>>()?;
        report(&mut table, sanity_check(&layers, &sample, "kmeans")?);
    }
    let mut manifest = RunManifest {
        subsample_fraction: Some(cfg.sample_fraction),
        ..Default::default()
    };
    manifest.seeds.insert("subsample".into(), cfg.seed);
    manifest.seeds.insert("kmeans".into(), cfg.seed);
    for (i, d) in a.clusterings.iter().enumerate() {
        manifest = manifest.with_input(format!("nlmcd/{i}"), hash_file(&d.join("memberships.bin"))?);
    }
    for (i, d) in a.features.iter().enumerate() {
        manifest = manifest.with_input(format!("features/{i}"), hash_file(&d.join("data.bin"))?);
    }
    table.manifest = Some(manifest);
    save_sanity_table(&a.output, &table)?;
    Ok(())
}

#[derive(Args)]
struct PipelineArgs {
    /// JSON pipeline config; flags win.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Feature matrix directory; repeat for each representation.
    #[arg(long = "input")]
    inputs: Vec<PathBuf>,
    #[arg(long)]
    output_dir: Option<PathBuf>,
    #[command(flatten)]
    embed: EmbedFlags,
    #[command(flatten)]
    cluster: ClusterFlags,
    #[command(flatten)]
    align: AlignFlags,
    #[arg(long)]
    embed_seed: Option<u64>,
    #[arg(long)]
    cluster_seed: Option<u64>,
    #[arg(long)]
    subsample_seed: Option<u64>,
    #[arg(long)]
    robustness_seed: Option<u64>,
    #[arg(long)]
    kmeans_seed: Option<u64>,
    #[arg(long)]
    no_robustness: bool,
    #[arg(long)]
    no_baselines: bool,
    #[arg(long)]
    pca_components: Option<usize>,
    #[arg(long, value_enum)]
    id_space: Option<IdSpaceArg>,
    #[arg(long)]
    fidelity_points: Option<usize>,
}

fn cmd_pipeline(a: PipelineArgs) -> Result<()> {
    let mut cfg = match &a.config {
        Some(p) => PipelineConfig::from_json_file(p)?,
        None => PipelineConfig::default(),
    };
    if !a.inputs.is_empty() {
        cfg.inputs = a.inputs.clone();
    }
    set!(cfg.output_dir, a.output_dir);
    a.embed.apply(&mut cfg.embed);
    a.cluster.apply(&mut cfg.cluster);
    a.align.apply(&mut cfg.align);
    set!(cfg.seeds.embed, a.embed_seed);
    set!(cfg.seeds.cluster, a.cluster_seed);
    set!(cfg.seeds.subsample, a.subsample_seed);
    set!(cfg.seeds.robustness, a.robustness_seed);
    set!(cfg.seeds.kmeans, a.kmeans_seed);
    if a.no_robustness {
        cfg.robustness = false;
    }
    if a.no_baselines {
        cfg.baselines.enabled = false;
    }
    if a.pca_components.is_some() {
        cfg.baselines.pca_components = a.pca_components;
    }
    if let Some(s) = a.id_space {
        cfg.intrinsic_dim_space = match s {
            IdSpaceArg::Original => IdSpace::Original,
            IdSpaceArg::Embedded => IdSpace::Embedded,
        };
    }
    set!(cfg.fidelity_points, a.fidelity_points);

    let index = run_pipeline(&cfg)?;
    for r in &index.representations {
        println!(
            "{:<24} k={:<4} noise={:.3} rmse={:.3}{}",
            r.tag,
            r.k,
            r.noise_rate,
            r.metrics.rmse,
            r.metrics.robustness.map(|v| format!(" robustness={v:.3}")).unwrap_or_default()
        );
    }
    for p in &index.pairs {
        println!("CBA {} vs {}: {:.4}", p.a, p.b, p.cba);
    }
    println!("run index: {}", cfg.output_dir.join("run.json").display());
    Ok(())
}

#[derive(Clone, Copy, ValueEnum)]
enum ManifoldArg {
    Blobs,
    Ring,
    Line,
}

#[derive(Args)]
struct SynthArgs {
    /// Directory receiving one matrix directory per layer and a pipeline config.
    #[arg(long)]
    output: PathBuf,
    /// JSON generator spec; flags win.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_enum)]
    manifold: Option<ManifoldArg>,
    #[arg(long)]
    blobs: Option<usize>,
    #[arg(long)]
    points_per_blob: Option<usize>,
    /// Blob center distance in units of sigma.
    #[arg(long)]
    separation: Option<f64>,
    #[arg(long)]
    sigma: Option<f64>,
    /// Point count for ring and line manifolds.
    #[arg(long)]
    points: Option<usize>,
    #[arg(long)]
    radius: Option<f64>,
    #[arg(long)]
    length: Option<f64>,
    #[arg(long)]
    noise: Option<f64>,
    #[arg(long)]
    dim: Option<usize>,
    #[arg(long)]
    layers: Option<usize>,
    #[arg(long)]
    layer_noise: Option<f64>,
    #[arg(long)]
    model: Option<String>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

struct DefaultSpec(SynthSpec);

impl Default for DefaultSpec {
    fn default() -> Self {
        Self(SynthSpec::blobs(3, 100, 10.0, 20))
    }
}

impl<'de> Deserialize<'de> for DefaultSpec {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        SynthSpec::deserialize(d).map(Self)
    }
}

fn cmd_synth(a: SynthArgs) -> Result<()> {
    let DefaultSpec(mut spec) = read_config(a.config.as_deref())?;
    if let Some(kind) = a.manifold {
        spec.manifold = match kind {
            ManifoldArg::Blobs => SynthSpec::blobs(3, 100, 10.0, 2).manifold,
            ManifoldArg::Ring => Manifold::Ring {
                points: 1000,
                radius: 1.0,
                noise: 0.0,
            },
            ManifoldArg::Line => Manifold::Line {
                points: 1000,
                length: 1.0,
                noise: 0.0,
            },
        };
    }
    match &mut spec.manifold {
        Manifold::Blobs {
            blobs,
            points_per_blob,
            separation,
            sigma,
        } => {
            set!(*blobs, a.blobs);
            set!(*points_per_blob, a.points_per_blob);
            set!(*separation, a.separation);
            set!(*sigma, a.sigma);
        }
        Manifold::Ring { points, radius, noise } => {
            set!(*points, a.points);
            set!(*radius, a.radius);
            set!(*noise, a.noise);
        }
        Manifold::Line { points, length, noise } => {
            set!(*points, a.points);
            set!(*length, a.length);
            set!(*noise, a.noise);
        }
    }
    set!(spec.dim, a.dim);
    set!(spec.layers, a.layers);
    set!(spec.layer_noise, a.layer_noise);
    set!(spec.model, a.model);

    let layers = generate_synthetic(&spec, a.seed)?;
    let mut inputs = Vec::with_capacity(layers.len());
    for m in &layers {
        let dir = a.output.join(m.source().tag());
        save_feature_matrix(m, &dir)?;
        inputs.push(dir);
    }
    write_json(&a.output.join("spec.json"), &spec)?;
    let template = PipelineConfig {
        inputs: inputs.clone(),
        output_dir: a.output.join("run"),
        embed: EmbedParams {
            dim: EmbedParams::default().dim.min(spec.dim),
            ..Default::default()
        },
        ..Default::default()
    };
    write_json(&a.output.join("pipeline.json"), &template)?;
    println!(
        "{} layers of {} points in {} dimensions: {}",
        layers.len(),
        layers[0].n(),
        spec.dim,
        a.output.display()
    );
    Ok(())
}

fn init_workers() -> Result<()> {
    let Ok(v) = std::env::var(WORKERS_ENV) else {
        return Ok(());
    };
    let n: usize = v.trim().parse().map_err(|_| {
        concept_align::Error::Validation(format!("{WORKERS_ENV} must be a positive integer, got {v:?}"))
    })?;
    concept_align::set_workers(n)?;
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    init_workers()?;
    match cli.command {
        Command::Embed(a) => cmd_embed(a),
        Command::Cluster(a) => cmd_cluster(a),
        Command::Validate(a) => cmd_validate(a),
        Command::Align(a) => cmd_align(a),
        Command::Atlas(a) => cmd_atlas(a),
        Command::Cfg(a) => cmd_cfg(a),
        Command::Sanity(a) => cmd_sanity(a),
        Command::Pipeline(a) => cmd_pipeline(a),
        Command::Synth(a) => cmd_synth(a),
    }
}

/// 2 for invalid inputs, 3 for failures during computation.
fn exit_code(err: &anyhow::Error) -> u8 {
    let lib = err.chain().find_map(|e| e.downcast_ref::<concept_align::Error>());
    match lib {
        Some(e) if e.stage().is_some_and(|s| s != "config") => 3,
        Some(e) if e.is_validation() => 2,
        _ => 3,
    }
}

/// Error chain on one line, skipping causes already quoted by their parent.
fn render(err: &anyhow::Error) -> String {
    let mut out = String::new();
    let mut last = String::new();
    for cause in err.chain() {
        let msg = cause.to_string();
        if !last.contains(&msg) {
            if !out.is_empty() {
                out.push_str(": ");
            }
            out.push_str(&msg);
        }
        last = msg;
    }
    out
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", render(&e));
            ExitCode::from(exit_code(&e))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cli_definition_is_consistent() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }
}
