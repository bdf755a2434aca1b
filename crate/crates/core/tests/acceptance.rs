//! Acceptance suite. Runs every criterion, prints one line each and exits
//! non-zero if any fails.

use std::collections::BTreeMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::Mutex;
use std::time::Instant;

use ndarray::{Array2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use concept_align::align::{
    concept_pair_matrix, crisp_to_membership, cross_distance, cross_distance_blocked, QUANT_BITS,
};
use concept_align::analysis::{hungarian_match, matching_cost};
use concept_align::density::{cluster_embedding, core_distances, minimum_spanning_tree, ClusterParams};
use concept_align::distance::{knn_graph, Points, Precomputed};
use concept_align::embed::{neighbor_embed, EmbedParams};
use concept_align::metrics::adjusted_rand_index;
use concept_align::pipeline::{run_pipeline, PipelineConfig};
use concept_align::repr::{load_clustering, save_feature_matrix, FeatureMatrix, SoftClustering};
use concept_align::synth::{generate_synthetic, Manifold, SynthSpec};
use concept_align::validity::{dbcv, twonn_id};

type Check = Result<String, String>;
type Criterion = (&'static str, fn() -> Check);

/// Every soft clustering produced anywhere in the suite.
static PRODUCED: Mutex<Vec<(String, SoftClustering)>> = Mutex::new(Vec::new());

fn record(name: &str, c: &SoftClustering) {
    PRODUCED.lock().unwrap().push((name.to_string(), c.clone()));
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn gauss(r: &mut impl Rng) -> f64 {
    Distribution::<f64>::sample(&StandardNormal, r)
}

fn all(n: usize) -> Vec<usize> {
    (0..n).collect()
}

/// Random fuzzy memberships: rows sum to at most 1, some rows are all zero.
fn fuzzy(r: &mut impl Rng, n: usize, k: usize) -> Array2<f64> {
    let mut m = Array2::from_shape_fn((n, k), |_| r.random::<f64>());
    for mut row in m.rows_mut() {
        if r.random::<f64>() < 0.1 {
            row.fill(0.0);
            continue;
        }
        let s: f64 = row.sum();
        let keep: f64 = r.random_range(0.5..=1.0);
        row.mapv_inplace(|v| (v / s * keep).min(1.0));
    }
    m
}

fn crisp_labels(r: &mut impl Rng, n: usize, k: usize) -> Vec<i64> {
    (0..n).map(|_| r.random_range(0..k as i64)).collect()
}

/// Pair-counting Rand index.
fn rand_index(a: &[i64], b: &[i64]) -> f64 {
    let n = a.len();
    let mut agree = 0u64;
    let mut total = 0u64;
    for i in 0..n {
        for j in i + 1..n {
            total += 1;
            if (a[i] == a[j]) == (b[i] == b[j]) {
                agree += 1;
            }
        }
    }
    agree as f64 / total as f64
}

fn crisp_rand() -> Check {
    let mut r = rng(1);
    let mut worst = 0.0f64;
    for _ in 0..500 {
        let n = r.random_range(2..=30);
        let (ka, kb) = (r.random_range(1..=5), r.random_range(1..=5));
        let (a, b) = (crisp_labels(&mut r, n, ka), crisp_labels(&mut r, n, kb));
        let p = crisp_to_membership(&a).map_err(|e| e.to_string())?;
        let q = crisp_to_membership(&b).map_err(|e| e.to_string())?;
        let cba = 1.0 - cross_distance(p.view(), q.view(), &all(n)).map_err(|e| e.to_string())?;
        worst = worst.max((cba - rand_index(&a, &b)).abs());
    }
    let detail = format!("500 pairs, max |CBA - Rand| = {worst:.1e}");
    if worst < 1e-12 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn pseudo_metric() -> Check {
    let mut r = rng(2);
    let (mut ident, mut sym, mut tri) = (0.0f64, 0.0f64, f64::NEG_INFINITY);
    for _ in 0..200 {
        let n = r.random_range(2..=100);
        let ks = [r.random_range(1..=6), r.random_range(1..=6), r.random_range(1..=6)];
        let [p, q, s] = ks.map(|k| fuzzy(&mut r, n, k));
        let idx = all(n);
        let d = |x: &Array2<f64>, y: &Array2<f64>| cross_distance(x.view(), y.view(), &idx).unwrap();
        ident = ident.max(d(&p, &p).abs());
        sym = sym.max((d(&p, &q) - d(&q, &p)).abs());
        tri = tri.max(d(&p, &s) - d(&p, &q) - d(&q, &s));
    }
    let detail = format!("200 triples, identity {ident:.1e}, symmetry {sym:.1e}, triangle slack {tri:.1e}");
    if ident <= 1e-9 && sym <= 1e-9 && tri <= 1e-9 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn upper_bound() -> Check {
    let mut r = rng(3);
    let mut failures = Vec::new();
    let mut tested = 0;
    for t in 0..300 {
        let n = r.random_range(2..=80);
        let kp = r.random_range(1..=6);
        // A third of the instances share the concept count.
        let kq = if t % 3 == 0 { kp } else { r.random_range(1..=6) };
        let (p, q) = (fuzzy(&mut r, n, kp), fuzzy(&mut r, n, kq));
        let idx = all(n);
        let d = cross_distance(p.view(), q.view(), &idx).unwrap();
        let sum = concept_pair_matrix(p.view(), q.view(), &idx).unwrap().sum();
        tested += 1;
        if sum < d - 1e-12 {
            failures.push(format!("n={n} kp={kp} kq={kq}: {sum} < {d}"));
        }
    }
    let detail = format!("{tested} random instances, {} violations", failures.len());
    if failures.is_empty() {
        Ok(detail)
    } else {
        Err(format!("{detail}: {}", failures.join("; ")))
    }
}

/// Naive double loop over quantized memberships with exact integer sums.
fn reference_cross(p: &Array2<f64>, q: &Array2<f64>) -> f64 {
    let scale = (1u64 << QUANT_BITS) as f64;
    let quant = |m: &Array2<f64>| m.mapv(|v| (v * scale).round() as i64);
    let (qp, qq) = (quant(p), quant(q));
    let n = p.nrows();
    let mut total: i128 = 0;
    for i in 0..n {
        for j in i + 1..n {
            let a: i128 = (0..qp.ncols()).map(|c| (qp[[i, c]] - qp[[j, c]]).abs() as i128).sum();
            let b: i128 = (0..qq.ncols()).map(|c| (qq[[i, c]] - qq[[j, c]]).abs() as i128).sum();
            total += (a - b).abs();
        }
    }
    let pairs = n as f64 * (n as f64 - 1.0) / 2.0;
    total as f64 / (2.0 * scale) / pairs
}

/// Plain floating-point double loop.
fn float_cross(p: &Array2<f64>, q: &Array2<f64>) -> f64 {
    let n = p.nrows();
    let mut total = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            let a: f64 = (&p.row(i) - &p.row(j)).mapv(f64::abs).sum();
            let b: f64 = (&q.row(i) - &q.row(j)).mapv(f64::abs).sum();
            total += 0.5 * (a - b).abs();
        }
    }
    total / (n as f64 * (n as f64 - 1.0) / 2.0)
}

fn brute_force() -> Check {
    let mut r = rng(4);
    let pools: Vec<rayon::ThreadPool> = [1, 2, 4]
        .iter()
        .map(|&t| rayon::ThreadPoolBuilder::new().num_threads(t).build().unwrap())
        .collect();
    let mut float_gap = 0.0f64;
    for inst in 0..50 {
        let n = 500;
        let (kp, kq) = (r.random_range(1..=8), r.random_range(1..=8));
        let (p, q) = (fuzzy(&mut r, n, kp), fuzzy(&mut r, n, kq));
        let want = reference_cross(&p, &q);
        float_gap = float_gap.max((want - float_cross(&p, &q)).abs());
        let idx = all(n);
        for pool in &pools {
            for block in [1, 7, 64, 256, 512] {
                let got = pool.install(|| cross_distance_blocked(p.view(), q.view(), &idx, block).unwrap());
                if got.to_bits() != want.to_bits() {
                    return Err(format!(
                        "instance {inst}, {} threads, block {block}: {got:e} != {want:e}",
                        pool.current_num_threads()
                    ));
                }
            }
        }
    }
    Ok(format!(
        "50 instances x 3 worker counts x 5 block sizes bit-identical; max gap to float loop {float_gap:.1e}"
    ))
}

fn blob_matrix(seed: u64) -> FeatureMatrix {
    generate_synthetic(&SynthSpec::blobs(3, 100, 10.0, 20), seed).unwrap().remove(0)
}

fn blob_embed(seed: u64) -> EmbedParams {
    EmbedParams {
        dim: 5,
        seed,
        ..Default::default()
    }
}

fn blob_cluster() -> ClusterParams {
    ClusterParams::default()
}

/// Truth and prediction induce the same partition.
fn same_partition(truth: &[i64], pred: &[i32]) -> bool {
    let mut fwd = BTreeMap::new();
    let mut back = BTreeMap::new();
    truth.iter().zip(pred).all(|(&t, &p)| {
        *fwd.entry(t).or_insert(p) == p && *back.entry(p).or_insert(t) == t
    })
}

fn clustering_recovery() -> Check {
    let m = blob_matrix(5);
    let truth = m.class_labels().unwrap();
    let e = neighbor_embed(&m, &blob_embed(0)).map_err(|e| e.to_string())?;
    let dc = cluster_embedding(e.coords.view(), &blob_cluster(), 0).map_err(|e| e.to_string())?;
    let c = &dc.soft;
    record("3-blob recovery", c);
    let noise = c.noise_rate;
    let non_noise: Vec<usize> = (0..c.n()).filter(|&i| c.hard_labels[i] >= 0).collect();
    let t: Vec<i64> = non_noise.iter().map(|&i| truth[i]).collect();
    let p: Vec<i32> = non_noise.iter().map(|&i| c.hard_labels[i]).collect();
    let ari = adjusted_rand_index(&p, &t);
    let argmax_ok = non_noise.iter().all(|&i| {
        let row = c.memberships.row(i);
        let best = (0..c.k()).fold(0, |b, a| if row[a] > row[b] { a } else { b });
        best as i32 == c.hard_labels[i]
    });
    let detail = format!(
        "k = {}, ARI = {ari}, noise rate = {noise:.3}, argmax agrees = {argmax_ok}",
        c.k()
    );
    if c.k() == 3 && same_partition(&t, &p) && ari == 1.0 && noise <= 0.05 && argmax_ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

/// DBCV as the pipeline reports it: on the neighbor embedding.
fn dbcv_ordering() -> Check {
    let m = blob_matrix(7);
    let truth: Vec<i32> = m.class_labels().unwrap().iter().map(|&l| l as i32).collect();
    let mut r = rng(7);
    let one = FeatureMatrix::from_array(
        Array2::from_shape_fn((300, 20), |_| gauss(&mut r)),
        concept_align::repr::Source::new("one-blob", 1, concept_align::repr::TokenKind::Cls),
    )
    .unwrap();
    let split: Vec<i32> = (0..300).map(|_| r.random_range(0..2)).collect();
    let embedded = |f: &FeatureMatrix| neighbor_embed(f, &blob_embed(0)).unwrap().coords;
    let score = |x: ndarray::ArrayView2<'_, f64>, l: &[i32]| dbcv(x, l).map(|d| d.mean).map_err(|e| e.to_string());
    let separated = score(embedded(&m).view(), &truth)?;
    let random = score(embedded(&one).view(), &split)?;
    let (raw_sep, raw_rand) = (score(m.data(), &truth)?, score(one.data(), &split)?);
    let detail = format!(
        "embedded: separated {separated:.3}, random split {random:.3} (raw 20-D: {raw_sep:.3}, {raw_rand:.3})"
    );
    if separated > 0.5 && random < 0.0 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn twonn() -> Check {
    let mut r = rng(8);
    let square = Array2::from_shape_fn((5000, 2), |_| r.random::<f64>());
    let d2 = twonn_id(square.view()).map_err(|e| e.to_string())?;
    let spec = SynthSpec {
        manifold: Manifold::Line {
            points: 5000,
            length: 1.0,
            noise: 0.0,
        },
        dim: 10,
        layers: 1,
        layer_noise: 0.0,
        model: "segment".into(),
    };
    let seg = generate_synthetic(&spec, 8).unwrap().remove(0);
    let d1 = twonn_id(seg.data()).map_err(|e| e.to_string())?;
    let detail = format!("square {d2:.3}, segment in R^10 {d1:.3}");
    if (1.7..=2.3).contains(&d2) && (0.85..=1.15).contains(&d1) {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn sanity_protocol() -> Check {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let spec = SynthSpec::blobs(4, 100, 8.0, 20).chain(5, 0.6);
    let mut inputs = Vec::new();
    for m in generate_synthetic(&spec, 9).unwrap() {
        let dir = tmp.path().join(m.source().tag());
        save_feature_matrix(&m, &dir).unwrap();
        inputs.push(dir);
    }
    let mut cfg = PipelineConfig {
        inputs,
        output_dir: tmp.path().join("run"),
        embed: EmbedParams {
            dim: 5,
            ..Default::default()
        },
        robustness: false,
        ..Default::default()
    };
    cfg.align.sample_fraction = 1.0;
    let index = run_pipeline(&cfg).map_err(|e| e.to_string())?;
    for r in &index.representations {
        let (c, _) = load_clustering(&cfg.output_dir.join(&r.clustering)).unwrap();
        record(&r.tag, &c);
    }
    let path = cfg.output_dir.join(index.sanity.as_ref().ok_or("no sanity table")?);
    let table: concept_align::baselines::SanityTable =
        serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap();
    let ratios: Vec<String> = table.entries.iter().map(|e| format!("{} {:.2}", e.method, e.ratio)).collect();
    let detail = format!("5-layer chain: {}", ratios.join(", "));
    let methods: Vec<&str> = table.entries.iter().map(|e| e.method.as_str()).collect();
    if methods == ["nlmcd", "pca", "kmeans"] && table.entries.iter().all(|e| e.ratio == 1.0) {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn robustness() -> Check {
    let m = blob_matrix(5);
    let run = |seed: u64| {
        let e = neighbor_embed(&m, &blob_embed(seed)).unwrap();
        let c = cluster_embedding(e.coords.view(), &blob_cluster(), seed).unwrap().soft;
        record(&format!("robustness seed {seed}"), &c);
        c
    };
    let (a, b) = (run(0), run(1));
    let sample = concept_align::repr::subsample(m.n(), 0.2, 0).unwrap();
    let v = concept_align::align::robustness(&a, &b, &sample).map_err(|e| e.to_string())?;
    let detail = format!("CBA between seeds 0 and 1: {v:.4}");
    if v >= 0.95 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for p in permutations(n - 1) {
        for pos in 0..=p.len() {
            let mut q = p.clone();
            q.insert(pos, n - 1);
            out.push(q);
        }
    }
    out
}

fn hungarian() -> Check {
    let mut r = rng(10);
    let perms = permutations(6);
    for inst in 0..100 {
        let cost = Array2::from_shape_fn((6, 6), |_| r.random::<f64>());
        let best = perms
            .iter()
            .map(|p| (0..6).map(|i| cost[[i, p[i]]]).sum::<f64>())
            .fold(f64::INFINITY, f64::min);
        let m = hungarian_match(cost.view()).map_err(|e| e.to_string())?;
        let got = matching_cost(cost.view(), &m);
        if m.len() != 6 || (got - best).abs() > 1e-12 {
            return Err(format!("instance {inst}: {got} vs exhaustive {best}"));
        }
    }
    Ok(format!("100 instances match exhaustive search over {} permutations", perms.len()))
}

/// Textbook O(n²) Prim over a dense matrix; returns the tree's edge weights.
fn prim_weights(w: &Array2<f64>) -> Vec<f64> {
    let n = w.nrows();
    let mut dist = vec![f64::INFINITY; n];
    let mut used = vec![false; n];
    dist[0] = 0.0;
    let mut weights = Vec::new();
    for step in 0..n {
        let v = (0..n)
            .filter(|&v| !used[v])
            .min_by(|&a, &b| dist[a].total_cmp(&dist[b]))
            .unwrap();
        used[v] = true;
        if step > 0 {
            weights.push(dist[v]);
        }
        for u in 0..n {
            if !used[u] && w[[v, u]] < dist[u] {
                dist[u] = w[[v, u]];
            }
        }
    }
    weights
}

fn sorted_sum(mut w: Vec<f64>) -> (Vec<f64>, f64) {
    w.sort_by(f64::total_cmp);
    let s = w.iter().sum();
    (w, s)
}

fn mst() -> Check {
    let mut r = rng(11);
    for inst in 0..100 {
        let (n, dim) = (200, r.random_range(2..=8));
        let k = r.random_range(1..=15);
        let x = Array2::from_shape_fn((n, dim), |_| gauss(&mut r));
        let d = Array2::from_shape_fn((n, n), |(i, j)| {
            (&x.row(i) - &x.row(j)).mapv(|v| v * v).sum().sqrt()
        });
        // Core distance: k-th smallest distance to another point.
        let core: Vec<f64> = (0..n)
            .map(|i| {
                let mut row: Vec<f64> = (0..n).filter(|&j| j != i).map(|j| d[[i, j]]).collect();
                row.sort_by(f64::total_cmp);
                row[k - 1]
            })
            .collect();
        let xv = x.view();
        let lib_core = core_distances(&knn_graph(&Points::new(&xv), k).unwrap(), k).unwrap();
        if lib_core.iter().zip(&core).any(|(a, b)| (a - b).abs() > 1e-12) {
            return Err(format!("instance {inst}: core distances differ"));
        }
        let mrd = Array2::from_shape_fn((n, n), |(i, j)| {
            if i == j {
                0.0
            } else {
                d[[i, j]].max(core[i]).max(core[j])
            }
        });
        let edges = minimum_spanning_tree(&Precomputed::new(mrd.view()).unwrap()).unwrap();
        let (lib_w, lib_total) = sorted_sum(edges.iter().map(|e| e.weight).collect());
        let (ref_w, ref_total) = sorted_sum(prim_weights(&mrd));
        if lib_w != ref_w || lib_total != ref_total {
            return Err(format!("instance {inst}: total {lib_total} vs reference {ref_total}"));
        }
    }
    Ok("100 random 200-point MRD matrices, identical edge weights and totals".into())
}

fn peak_rss_mb() -> Option<f64> {
    let status = std::fs::read_to_string("/proc/self/status").ok()?;
    let line = status.lines().find(|l| l.starts_with("VmHWM:"))?;
    let kb: f64 = line.split_whitespace().nth(1)?.parse().ok()?;
    Some(kb / 1024.0)
}

fn performance() -> Check {
    let mut r = rng(12);
    let n = 10_000;
    let p = fuzzy(&mut r, n, 50);
    let q = fuzzy(&mut r, n, 50);
    let before = peak_rss_mb();
    let start = Instant::now();
    let d = cross_distance(p.view(), q.view(), &all(n)).map_err(|e| e.to_string())?;
    let secs = start.elapsed().as_secs_f64();
    let after = peak_rss_mb();
    let growth = match (before, after) {
        (Some(b), Some(a)) => format!(", peak RSS {a:.0} MB (+{:.0} MB)", a - b),
        _ => String::new(),
    };
    let threads = rayon::current_num_threads();
    let detail = format!("N = 10000, k = 50, {threads} worker(s): {secs:.1} s, d_cross = {d:.4}{growth}");
    let mem_ok = after.is_none_or(|a| a < 4096.0);
    if secs < 120.0 && mem_ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn soft_invariants() -> Check {
    let produced = PRODUCED.lock().unwrap();
    let mut bad = Vec::new();
    for (name, c) in produced.iter() {
        let in_range = c.memberships.iter().all(|v| (0.0..=1.0).contains(v));
        let rows_ok = c.memberships.sum_axis(Axis(1)).iter().all(|&s| s <= 1.0 + 1e-6);
        if !in_range || !rows_ok {
            bad.push(name.clone());
        }
    }
    let detail = format!("{} clusterings checked", produced.len());
    if produced.is_empty() {
        Err("no clusterings were produced".into())
    } else if bad.is_empty() {
        Ok(detail)
    } else {
        Err(format!("{detail}, violations in {}", bad.join(", ")))
    }
}

fn main() {
    let criteria: Vec<Criterion> = vec![
        ("crisp Rand reduction", crisp_rand),
        ("pseudo-metric", pseudo_metric),
        ("upper bound", upper_bound),
        ("brute-force equivalence", brute_force),
        ("clustering recovery", clustering_recovery),
        ("DBCV ordering", dbcv_ordering),
        ("TWO-NN", twonn),
        ("sanity check", sanity_protocol),
        ("robustness", robustness),
        ("Hungarian matching", hungarian),
        ("MST vs Prim", mst),
        ("performance", performance),
        ("soft-membership invariants", soft_invariants),
    ];
    let limits: BTreeMap<&str, f64> = [
        ("crisp Rand reduction", 10.0),
        ("pseudo-metric", 30.0),
        ("clustering recovery", 60.0),
    ]
    .into_iter()
    .collect();

    let mut failed = 0;
    for (name, f) in criteria {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let secs = start.elapsed().as_secs_f64();
        let outcome = match (outcome, limits.get(name)) {
            (Ok(d), Some(&limit)) if secs >= limit => Err(format!("{d}; exceeded {limit} s")),
            (o, _) => o,
        };
        match outcome {
            Ok(d) => println!("PASS  {name:<28} {secs:>7.2}s  {d}"),
            Err(d) => {
                failed += 1;
                println!("FAIL  {name:<28} {secs:>7.2}s  {d}");
            }
        }
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
    println!("all criteria passed");
}

