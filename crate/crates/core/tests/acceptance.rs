//! Acceptance checklist for the forecasting pipeline.
//!
//! Runs as a plain binary (no test harness) so each criterion prints exactly
//! one PASS / FAIL / SKIP line; the process exits non-zero if any criterion
//! fails. Criteria with stated runtime budgets enforce them.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use scenecast::autodiff::{Tape, TensorId};
use scenecast::baselines::BaselineParams;
use scenecast::eval::{
    ci95, results_csv, rmse, run_experiment, summarize_runs, t_quantile_975, BaselineGrids,
    ExperimentPlan, ModelSpec, RunRecord,
};
use scenecast::gnn::{self, GnnModel, GraphTensors, TrainConfig};
use scenecast::graph::{build_year_graph, Edge, MobilityGraph, Scenario};
use scenecast::ingest::{
    filter_fsas, load_dataset, Census, CensusTable, Dataset, DimensionCodebook, LoadOptions,
    Review, Venue, CENSUS_DIMS, SCENE_DIMS,
};
use scenecast::lasso::{full_shrinkage_lambda, lasso_fit};
use scenecast::lda::fit_lda;
use scenecast::linalg::Matrix;
use scenecast::profiling::{cluster_users, Corpus, TopicEmbedding};
use scenecast::scenes::{build_scene_table, score_fsa, SceneEntry, SceneTable};
use scenecast::seeds::{derive_seed, stream_rng};
use scenecast::synth::{
    generate_synthetic_city, prepare_artifacts, DependenceMode, SynthConfig,
};
use std::collections::{BTreeMap, BTreeSet};
use std::time::Instant;

/// Ok(detail) passes; Ok starting with "SKIP" is reported as skipped;
/// Err(reason) fails.
type CheckOutcome = Result<String, String>;

struct Check {
    id: usize,
    name: &'static str,
    run: fn() -> CheckOutcome,
}

fn main() {
    let checks: Vec<Check> = vec![
        Check { id: 1, name: "gradient integrity", run: c1_gradient_integrity },
        Check { id: 2, name: "memorization", run: c2_memorization },
        Check { id: 3, name: "permutation equivariance", run: c3_equivariance },
        Check { id: 4, name: "graph construction oracle", run: c4_graph_oracle },
        Check { id: 5, name: "scene scoring oracle", run: c5_scene_oracle },
        Check { id: 6, name: "profiling recovery", run: c6_profiling_recovery },
        Check { id: 7, name: "lasso correctness", run: c7_lasso },
        Check { id: 8, name: "scenario ordering", run: c8_scenario_ordering },
        Check { id: 9, name: "historical-mean gap", run: c9_naive_gap },
        Check { id: 10, name: "harness exactness", run: c10_harness_exactness },
        Check { id: 11, name: "byte reproducibility", run: c11_reproducibility },
        Check { id: 12, name: "real-data conformance", run: c12_real_data },
    ];

    let mut failed = 0usize;
    for check in &checks {
        let started = Instant::now();
        let outcome = std::panic::catch_unwind(check.run);
        let secs = started.elapsed().as_secs_f64();
        match outcome {
            Ok(Ok(detail)) if detail.starts_with("SKIP") => {
                println!("criterion {:>2} SKIP  {}: {} [{:.1}s]", check.id, check.name, detail, secs);
            }
            Ok(Ok(detail)) => {
                println!("criterion {:>2} PASS  {}: {} [{:.1}s]", check.id, check.name, detail, secs);
            }
            Ok(Err(reason)) => {
                println!("criterion {:>2} FAIL  {}: {} [{:.1}s]", check.id, check.name, reason, secs);
                failed += 1;
            }
            Err(panic) => {
                let msg = panic
                    .downcast_ref::<String>()
                    .cloned()
                    .or_else(|| panic.downcast_ref::<&str>().map(|s| s.to_string()))
                    .unwrap_or_else(|| "unknown panic".to_string());
                println!("criterion {:>2} FAIL  {}: panicked: {} [{:.1}s]", check.id, check.name, msg, secs);
                failed += 1;
            }
        }
    }
    println!("acceptance: {}/{} criteria passed", checks.len() - failed, checks.len());
    if failed > 0 {
        std::process::exit(1);
    }
}

// ---------------------------------------------------------------------------
// shared builders
// ---------------------------------------------------------------------------

fn fsa_code(i: usize) -> String {
    format!("{}1{}", (b'A' + i as u8) as char, (b'A' + i as u8) as char)
}

fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize, lo: f64, hi: f64) -> Matrix {
    Matrix::from_vec(rows, cols, (0..rows * cols).map(|_| rng.gen_range(lo..hi)).collect())
}

fn toy_scenes(city: &str, years: &[i32], fsas: &[String], seed: u64) -> SceneTable {
    let mut rng = stream_rng(seed, "toy_scenes");
    let mut table = BTreeMap::new();
    for &year in years {
        let mut ys = BTreeMap::new();
        for fsa in fsas {
            let mut dims = [0.0; SCENE_DIMS];
            for d in dims.iter_mut() {
                *d = rng.gen_range(1.0..5.0);
            }
            ys.insert(fsa.clone(), SceneEntry { dims, omega: 1 });
        }
        table.insert(year, ys);
    }
    SceneTable { city: city.to_string(), years: table }
}

/// Small ring-shaped mobility graph with full feature blocks.
fn toy_graph(city: &str, year: i32, n: usize, n_groups: usize, seed: u64) -> MobilityGraph {
    let mut rng = stream_rng(seed, &format!("toy_graph/{year}"));
    let vertices: Vec<String> = (0..n).map(fsa_code).collect();
    let vertex_features: Vec<Vec<f64>> = (0..n)
        .map(|_| (0..SCENE_DIMS + CENSUS_DIMS).map(|_| rng.gen_range(0.5..4.5)).collect())
        .collect();
    let mut edges = Vec::new();
    for i in 0..n {
        let j = (i + 1) % n;
        let (a, b) = if i < j { (i, j) } else { (j, i) };
        let mut group_counts = vec![0.0; n_groups];
        let w = rng.gen_range(1..6) as f64;
        for _ in 0..w as usize {
            let g = rng.gen_range(0..n_groups);
            group_counts[g] += 1.0;
        }
        edges.push(Edge { i: a, j: b, weight: w, group_counts });
    }
    edges.sort_by_key(|e| (e.i, e.j));
    edges.dedup_by_key(|e| (e.i, e.j));
    MobilityGraph {
        city: city.to_string(),
        year,
        vertices,
        vertex_features,
        edges,
    }
}

// ---------------------------------------------------------------------------
// criterion 1: finite-difference gradient checks
// ---------------------------------------------------------------------------

/// Max relative error between analytic and central-difference gradients for
/// a scalar-valued tape program over `params`.
fn fd_max_rel_err(
    params: &[Matrix],
    build: &dyn Fn(&mut Tape, &[TensorId]) -> TensorId,
) -> f64 {
    let loss_of = |values: &[Matrix]| -> f64 {
        let mut tape = Tape::new();
        let ids: Vec<TensorId> = values
            .iter()
            .map(|p| tape.param(p.clone()).expect("param"))
            .collect();
        let loss = build(&mut tape, &ids);
        tape.value(loss).data[0]
    };

    let mut tape = Tape::new();
    let ids: Vec<TensorId> = params
        .iter()
        .map(|p| tape.param(p.clone()).expect("param"))
        .collect();
    let loss = build(&mut tape, &ids);
    tape.backward(loss).expect("backward");
    let grads: Vec<Matrix> = ids
        .iter()
        .map(|&id| tape.grad(id).expect("grad").clone())
        .collect();

    let mut worst = 0.0f64;
    for (k, p) in params.iter().enumerate() {
        for e in 0..p.data.len() {
            let h = 1e-5 * p.data[e].abs().max(1.0);
            let mut plus = params.to_vec();
            plus[k].data[e] += h;
            let mut minus = params.to_vec();
            minus[k].data[e] -= h;
            let numeric = (loss_of(&plus) - loss_of(&minus)) / (2.0 * h);
            let analytic = grads[k].data[e];
            let scale = analytic.abs().max(numeric.abs()).max(1.0);
            worst = worst.max((numeric - analytic).abs() / scale);
        }
    }
    worst
}

fn c1_gradient_integrity() -> CheckOutcome {
    let started = Instant::now();
    let mut rng = stream_rng(101, "fd");
    // inputs kept away from relu kinks so the smooth tolerance applies
    let a = random_matrix(&mut rng, 3, 4, 0.2, 1.4);
    let b = random_matrix(&mut rng, 3, 4, 0.2, 1.4);
    let w = random_matrix(&mut rng, 4, 5, -1.2, -0.3);
    let bias = random_matrix(&mut rng, 1, 4, 0.1, 0.9);
    let gamma = random_matrix(&mut rng, 1, 4, 0.5, 1.5);
    let beta = random_matrix(&mut rng, 1, 4, -0.4, 0.4);
    let temp = Matrix::scalar(1.3);
    let msgs = random_matrix(&mut rng, 4, 3, 0.2, 2.0); // 4 directed messages
    let target = random_matrix(&mut rng, 3, 4, 0.0, 1.0);
    let dst = vec![1usize, 0, 2, 1];

    let smooth_ops: Vec<(&str, Vec<Matrix>, Box<dyn Fn(&mut Tape, &[TensorId]) -> TensorId>)> = vec![
        ("add", vec![a.clone(), b.clone()], Box::new(|t, ids| {
            let s = t.add(ids[0], ids[1]).unwrap();
            t.sum(s).unwrap()
        })),
        ("mul", vec![a.clone(), b.clone()], Box::new(|t, ids| {
            let s = t.mul(ids[0], ids[1]).unwrap();
            t.sum(s).unwrap()
        })),
        ("matmul", vec![a.clone(), w.clone()], Box::new(|t, ids| {
            let s = t.matmul(ids[0], ids[1]).unwrap();
            t.sum(s).unwrap()
        })),
        ("add_row", vec![a.clone(), bias.clone()], Box::new(|t, ids| {
            let s = t.add_row(ids[0], ids[1]).unwrap();
            t.sum(s).unwrap()
        })),
        ("add_const", vec![a.clone()], Box::new(|t, ids| {
            let s = t.add_const(ids[0], 0.37).unwrap();
            t.sum(s).unwrap()
        })),
        ("relu (off kink)", vec![a.clone()], Box::new(|t, ids| {
            let s = t.relu(ids[0]).unwrap();
            t.sum(s).unwrap()
        })),
        ("layernorm", vec![a.clone(), gamma.clone(), beta.clone()], Box::new(|t, ids| {
            let s = t.layernorm(ids[0], ids[1], ids[2], 1e-12).unwrap();
            t.sum(s).unwrap()
        })),
        ("dropout (fixed mask)", vec![a.clone()], Box::new(|t, ids| {
            let mut mask_rng = ChaCha8Rng::seed_from_u64(99);
            let s = t.dropout(ids[0], 0.35, true, &mut mask_rng).unwrap();
            t.sum(s).unwrap()
        })),
        ("gather_rows", vec![a.clone()], Box::new(|t, ids| {
            let s = t.gather_rows(ids[0], &[2, 0, 1, 2]).unwrap();
            t.sum(s).unwrap()
        })),
        ("segment_softmax", vec![msgs.clone(), temp.clone()], Box::new(move |t, ids| {
            let s = t.segment_softmax(ids[0], ids[1], &dst, 3).unwrap();
            t.sum(s).unwrap()
        })),
        ("mse", vec![a.clone()], Box::new(move |t, ids| t.mse(ids[0], &target).unwrap())),
        ("sum", vec![a.clone()], Box::new(|t, ids| t.sum(ids[0]).unwrap())),
    ];

    let mut details = Vec::new();
    for (name, params, build) in &smooth_ops {
        let err = fd_max_rel_err(params, build.as_ref());
        if err >= 1e-6 {
            return Err(format!("op {name}: max relative error {err:.3e} >= 1e-6"));
        }
        details.push(format!("{name} {err:.1e}"));
    }

    // full 5-block model on a 3-vertex graph (dropout off so the loss is
    // deterministic); tolerance 1e-4 because hidden relus may sit near kinks
    let config = TrainConfig {
        hidden: 4,
        dropout: 0.0,
        epochs: 1,
        ..TrainConfig::new(7)
    };
    let mut init_rng = stream_rng(7, "gnn_init");
    let model = GnnModel::new(SCENE_DIMS + CENSUS_DIMS, 3, &config, &mut init_rng);
    let mut data_rng = stream_rng(8, "fd_graph");
    let tensors = GraphTensors {
        x_v: random_matrix(&mut data_rng, 3, SCENE_DIMS + CENSUS_DIMS, 0.1, 1.0),
        x_e: random_matrix(&mut data_rng, 4, 3, 0.1, 1.0),
        src: vec![0, 1, 1, 2],
        dst: vec![1, 0, 2, 1],
    };
    let target = random_matrix(&mut data_rng, 3, SCENE_DIMS, 1.0, 5.0);

    let loss_of = |m: &GnnModel| -> f64 {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        m.loss_and_grads(&tensors, &target, &mut rng).expect("loss").0
    };
    let mut rng0 = ChaCha8Rng::seed_from_u64(0);
    let (_, grads) = model.loss_and_grads(&tensors, &target, &mut rng0).expect("grads");
    let mut worst = 0.0f64;
    let mut n_params = 0usize;
    for (k, p) in model.params.iter().enumerate() {
        for e in 0..p.data.len() {
            n_params += 1;
            let h = 1e-5 * p.data[e].abs().max(1.0);
            let mut plus = model.clone();
            plus.params[k].data[e] += h;
            let mut minus = model.clone();
            minus.params[k].data[e] -= h;
            let numeric = (loss_of(&plus) - loss_of(&minus)) / (2.0 * h);
            let analytic = grads[k].data[e];
            let scale = analytic.abs().max(numeric.abs()).max(1.0);
            worst = worst.max((numeric - analytic).abs() / scale);
        }
    }
    if worst >= 1e-4 {
        return Err(format!("full model: max relative error {worst:.3e} >= 1e-4"));
    }
    let secs = started.elapsed().as_secs_f64();
    if secs >= 60.0 {
        return Err(format!("took {secs:.1}s, budget is 60s"));
    }
    Ok(format!(
        "{} ops < 1e-6; full model ({n_params} parameters) {worst:.2e} < 1e-4",
        smooth_ops.len()
    ))
}

// ---------------------------------------------------------------------------
// criterion 2: single-pair memorization
// ---------------------------------------------------------------------------

fn c2_memorization() -> CheckOutcome {
    let started = Instant::now();
    let fsas: Vec<String> = (0..4).map(fsa_code).collect();
    let scenes = toy_scenes("memcity", &[2014, 2015], &fsas, 21);
    let mut graphs = BTreeMap::new();
    graphs.insert(2014, toy_graph("memcity", 2014, 4, 2, 22));
    graphs.insert(2015, toy_graph("memcity", 2015, 4, 2, 23));

    let config = TrainConfig {
        hidden: 64,
        dropout: 0.0,
        lr: 1e-3,
        epochs: 2000,
        ..TrainConfig::new(5)
    };
    let trained = gnn::train(&graphs, &scenes, &config).map_err(|e| e.to_string())?;
    let final_mse = trained
        .loss_trace
        .iter()
        .map(|p| p.mse)
        .fold(f64::INFINITY, f64::min);
    let secs = started.elapsed().as_secs_f64();
    if secs >= 120.0 {
        return Err(format!("took {secs:.1}s, budget is 120s"));
    }
    if final_mse >= 1e-3 {
        return Err(format!("best training MSE {final_mse:.3e} >= 1e-3 after 2000 epochs"));
    }
    Ok(format!("training MSE {final_mse:.2e} < 1e-3 within 2000 epochs"))
}

// ---------------------------------------------------------------------------
// criterion 3: vertex-permutation equivariance
// ---------------------------------------------------------------------------

fn permute_graph(g: &MobilityGraph, perm: &[usize]) -> MobilityGraph {
    let n = perm.len();
    let mut vertices = vec![String::new(); n];
    let mut features = vec![Vec::new(); n];
    for i in 0..n {
        vertices[perm[i]] = g.vertices[i].clone();
        features[perm[i]] = g.vertex_features[i].clone();
    }
    let mut edges: Vec<Edge> = g
        .edges
        .iter()
        .map(|e| {
            let (a, b) = (perm[e.i], perm[e.j]);
            let (i, j) = if a < b { (a, b) } else { (b, a) };
            Edge { i, j, weight: e.weight, group_counts: e.group_counts.clone() }
        })
        .collect();
    edges.sort_by(|x, y| (x.i, x.j).cmp(&(y.i, y.j)));
    MobilityGraph {
        city: g.city.clone(),
        year: g.year,
        vertices,
        vertex_features: features,
        edges,
    }
}

fn c3_equivariance() -> CheckOutcome {
    let n = 6;
    let fsas: Vec<String> = (0..n).map(fsa_code).collect();
    let scenes = toy_scenes("permcity", &[2014, 2015], &fsas, 31);
    let mut graphs = BTreeMap::new();
    graphs.insert(2014, toy_graph("permcity", 2014, n, 2, 32));
    graphs.insert(2015, toy_graph("permcity", 2015, n, 2, 33));
    let config = TrainConfig {
        hidden: 8,
        dropout: 0.0,
        epochs: 10,
        ..TrainConfig::new(6)
    };
    let trained = gnn::train(&graphs, &scenes, &config).map_err(|e| e.to_string())?;

    let probe = toy_graph("permcity", 2016, n, 2, 34);
    let base = gnn::predict(&trained, &probe).map_err(|e| e.to_string())?;

    let mut rng = stream_rng(35, "perms");
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let mut perm: Vec<usize> = (0..n).collect();
        perm.shuffle(&mut rng);
        let permuted = permute_graph(&probe, &perm);
        let pred = gnn::predict(&trained, &permuted).map_err(|e| e.to_string())?;
        for i in 0..n {
            for d in 0..SCENE_DIMS {
                worst = worst.max((pred.get(perm[i], d) - base.get(i, d)).abs());
            }
        }
    }
    if worst >= 1e-9 {
        return Err(format!("max |Δ| {worst:.3e} >= 1e-9 over 20 permutations"));
    }
    Ok(format!("max |Δ| {worst:.1e} < 1e-9 over 20 random permutations"))
}

// ---------------------------------------------------------------------------
// criterion 4: graph construction vs. brute-force oracle
// ---------------------------------------------------------------------------

fn covering_census(fsas: &[String]) -> Census {
    let mut tables = BTreeMap::new();
    for vintage in [2011, 2016] {
        let rows: BTreeMap<String, [f64; CENSUS_DIMS]> = fsas
            .iter()
            .enumerate()
            .map(|(i, fsa)| (fsa.clone(), [i as f64 + 0.5; CENSUS_DIMS]))
            .collect();
        tables.insert(vintage, CensusTable { vintage, rows });
    }
    Census { tables }
}

fn covering_codebook(dataset: &Dataset) -> DimensionCodebook {
    let mut scores = BTreeMap::new();
    for venue in dataset.venues.values() {
        for cat in &venue.categories {
            let mut row = [0.0; SCENE_DIMS];
            for (d, slot) in row.iter_mut().enumerate() {
                *slot = 1.0 + ((cat.len() + d) % 5) as f64;
            }
            scores.insert(cat.clone(), row);
        }
    }
    DimensionCodebook { scores }
}

fn random_dataset(seed: u64) -> Dataset {
    let mut rng = stream_rng(seed, "oracle_dataset");
    let n_fsas = rng.gen_range(2..6);
    let venues_per_fsa = rng.gen_range(1..4);
    let n_users = rng.gen_range(1..10);
    let mut venues = BTreeMap::new();
    for f in 0..n_fsas {
        for k in 0..venues_per_fsa {
            let id = format!("v{f}_{k}");
            venues.insert(
                id.clone(),
                Venue {
                    venue_id: id,
                    fsa: fsa_code(f),
                    categories: vec![format!("kind {}", (b'a' + f as u8) as char)],
                    lat: Some(41.0),
                    lon: Some(-75.0 - f as f64),
                },
            );
        }
    }
    let users: BTreeSet<String> = (0..n_users).map(|i| format!("u{i}")).collect();
    let mut reviews = Vec::new();
    for f in 0..n_fsas {
        reviews.push(Review { user_id: "u0".into(), venue_id: format!("v{f}_0"), year: 2014 });
    }
    for _ in 0..rng.gen_range(0..80) {
        reviews.push(Review {
            user_id: format!("u{}", rng.gen_range(0..n_users)),
            venue_id: format!("v{}_{}", rng.gen_range(0..n_fsas), rng.gen_range(0..venues_per_fsa)),
            year: rng.gen_range(2014..2017),
        });
    }
    Dataset::from_parts("oraclecity", venues, reviews, users)
}

fn c4_graph_oracle() -> CheckOutcome {
    for t in 0..100u64 {
        let dataset = random_dataset(4000 + t);
        let mut rng = stream_rng(4800 + t, "oracle_cfg");
        let n_groups = rng.gen_range(1..4);
        // partial assignment: unprofiled users count toward weights only
        let mut assignment: BTreeMap<String, usize> = BTreeMap::new();
        for u in &dataset.users {
            if rng.gen_bool(0.7) {
                assignment.insert(u.clone(), rng.gen_range(0..n_groups));
            }
        }
        let year = rng.gen_range(2014..2017);
        let census = covering_census(&dataset.fsas());
        let codebook = covering_codebook(&dataset);
        let scenes = build_scene_table(&dataset, &codebook, 2014..=2016)
            .map_err(|e| format!("dataset {t}: scenes: {e}"))?;
        let graph = build_year_graph(&dataset, year, &assignment, n_groups, &census, &scenes)
            .map_err(|e| format!("dataset {t}: graph: {e}"))?;

        // brute-force oracle: enumerate each user's unordered FSA pairs
        let index: BTreeMap<&str, usize> = graph
            .vertices
            .iter()
            .enumerate()
            .map(|(i, f)| (f.as_str(), i))
            .collect();
        let mut per_user: BTreeMap<&str, BTreeSet<usize>> = BTreeMap::new();
        for r in &dataset.reviews {
            if r.year == year {
                if let Some(v) = dataset.venues.get(&r.venue_id) {
                    per_user.entry(r.user_id.as_str()).or_default().insert(index[v.fsa.as_str()]);
                }
            }
        }
        let mut expected: BTreeMap<(usize, usize), (f64, Vec<f64>)> = BTreeMap::new();
        for (user, fsas) in &per_user {
            let fsas: Vec<usize> = fsas.iter().copied().collect();
            for a in 0..fsas.len() {
                for b in (a + 1)..fsas.len() {
                    let e = expected
                        .entry((fsas[a], fsas[b]))
                        .or_insert_with(|| (0.0, vec![0.0; n_groups]));
                    e.0 += 1.0;
                    if let Some(&g) = assignment.get(*user) {
                        e.1[g] += 1.0;
                    }
                }
            }
        }
        let got: BTreeMap<(usize, usize), (f64, Vec<f64>)> = graph
            .edges
            .iter()
            .map(|e| ((e.i, e.j), (e.weight, e.group_counts.clone())))
            .collect();
        if got != expected {
            return Err(format!("dataset {t}: edge map mismatch (year {year})"));
        }
        if got.len() != graph.edges.len() {
            return Err(format!("dataset {t}: duplicate edges"));
        }
    }
    Ok("edge sets, weights, and group counts exactly match on 100 random datasets".to_string())
}

// ---------------------------------------------------------------------------
// criterion 5: scene scoring vs. double-loop oracle
// ---------------------------------------------------------------------------

fn c5_scene_oracle() -> CheckOutcome {
    let mut worst = 0.0f64;
    for t in 0..100u64 {
        let mut rng = stream_rng(5000 + t, "scene_oracle");
        let n_venues = rng.gen_range(1..7);
        let n_cats = rng.gen_range(1..5);
        let mut codebook = DimensionCodebook::default();
        for c in 0..n_cats {
            let mut row = [0.0; SCENE_DIMS];
            for slot in row.iter_mut() {
                *slot = rng.gen_range(1.0..5.0);
            }
            codebook.scores.insert(format!("cat{c}"), row);
        }
        let venues: Vec<Venue> = (0..n_venues)
            .map(|v| {
                let k = rng.gen_range(1..=n_cats);
                let mut cats: Vec<usize> = (0..n_cats).collect();
                cats.shuffle(&mut rng);
                Venue {
                    venue_id: format!("v{v}"),
                    fsa: "A1A".into(),
                    categories: cats[..k].iter().map(|c| format!("cat{c}")).collect(),
                    lat: None,
                    lon: None,
                }
            })
            .collect();

        let got = score_fsa(venues.iter(), &codebook).map_err(|e| format!("case {t}: {e}"))?;

        // independent oracle: plain double loop, sum-then-divide
        let mut expect = [0.0f64; SCENE_DIMS];
        for v in &venues {
            let mut vsum = [0.0f64; SCENE_DIMS];
            for c in &v.categories {
                let row = codebook.scores[c];
                for d in 0..SCENE_DIMS {
                    vsum[d] += row[d];
                }
            }
            for d in 0..SCENE_DIMS {
                expect[d] += vsum[d] / v.categories.len() as f64;
            }
        }
        for d in 0..SCENE_DIMS {
            expect[d] /= venues.len() as f64;
            let diff = (got[d] - expect[d]).abs();
            worst = worst.max(diff);
            if diff > 1e-12 {
                return Err(format!("case {t} dim {d}: |Δ| {diff:.3e} > 1e-12"));
            }
            if !(1.0..=5.0).contains(&got[d]) {
                return Err(format!("case {t} dim {d}: score {} out of [1, 5]", got[d]));
            }
        }
    }
    Ok(format!("100 random cases match the double-loop oracle; worst |Δ| {worst:.1e}"))
}

// ---------------------------------------------------------------------------
// criterion 6: profiling recovery
// ---------------------------------------------------------------------------

fn c6_profiling_recovery() -> CheckOutcome {
    let words_a = ["alder", "birch", "cedar", "dogwood", "elm", "fir", "ginkgo", "hazel"];
    let words_b = ["anchovy", "bass", "cod", "dace", "eel", "flounder", "gar", "herring"];

    let mut topic_hits = 0usize;
    for s in 0..10u64 {
        let mut rng = stream_rng(600 + s, "planted_corpus");
        let docs: Vec<(String, Vec<String>)> = (0..40)
            .map(|i| {
                let side: &[&str] = if i % 2 == 0 { &words_a } else { &words_b };
                let tokens = (0..24).map(|_| side[rng.gen_range(0..side.len())].to_string()).collect();
                (format!("u{i}"), tokens)
            })
            .collect();
        let corpus = Corpus::from_raw(docs).map_err(|e| e.to_string())?;
        let model = fit_lda(&corpus, 2, derive_seed(700 + s, "lda"), 400).map_err(|e| e.to_string())?;

        let mass_on_a = |topic: usize| -> f64 {
            words_a
                .iter()
                .map(|w| {
                    corpus
                        .vocab_list
                        .iter()
                        .position(|v| v == w)
                        .map_or(0.0, |idx| model.word_topic.get(topic, idx))
                })
                .sum()
        };
        let (m0, m1) = (mass_on_a(0), mass_on_a(1));
        // align topics to planted sides; B-mass is 1 − A-mass
        let aligned = ((m0 + (1.0 - m1)) / 2.0).max((m1 + (1.0 - m0)) / 2.0);
        if aligned >= 0.9 {
            topic_hits += 1;
        }
    }
    if topic_hits < 9 {
        return Err(format!("2-topic recovery: only {topic_hits}/10 seeds reached word mass >= 0.9"));
    }

    let mut blob_hits = 0usize;
    for s in 0..10u64 {
        let mut rng = stream_rng(650 + s, "planted_blobs");
        let n = 30;
        let mut matrix = Matrix::zeros(n, 3);
        let mut truth = Vec::with_capacity(n);
        for i in 0..n {
            let blob = i % 3;
            truth.push(blob);
            for d in 0..3 {
                let center = if d == blob { 2.0 } else { 0.0 };
                matrix.set(i, d, center + rng.gen_range(-0.1..0.1));
            }
        }
        let embedding = TopicEmbedding {
            users: (0..n).map(|i| format!("u{i}")).collect(),
            matrix,
        };
        let (groups, _) = cluster_users(&embedding, 2, 6, 660 + s).map_err(|e| e.to_string())?;
        if groups.k != 3 {
            continue;
        }
        // purity 1.0: each found cluster contains exactly one planted blob
        let mut pure = true;
        let mut seen: BTreeMap<usize, usize> = BTreeMap::new();
        for (i, user) in embedding.users.iter().enumerate() {
            let c = groups.assignment[user];
            match seen.get(&c) {
                None => {
                    seen.insert(c, truth[i]);
                }
                Some(&b) if b == truth[i] => {}
                Some(_) => {
                    pure = false;
                    break;
                }
            }
        }
        if pure {
            blob_hits += 1;
        }
    }
    if blob_hits < 9 {
        return Err(format!("3-blob recovery: only {blob_hits}/10 seeds picked k=3 with purity 1.0"));
    }
    Ok(format!("topic mass {topic_hits}/10, blob purity {blob_hits}/10 (both >= 9/10)"))
}

// ---------------------------------------------------------------------------
// criterion 7: lasso vs. normal equations
// ---------------------------------------------------------------------------

/// Ordinary least squares on centered data via Gaussian elimination with
/// partial pivoting; returns (weights, intercept). Independent of the
/// coordinate-descent code under test.
fn ols_normal_equations(x: &Matrix, y: &[f64]) -> (Vec<f64>, f64) {
    let (n, d) = (x.rows, x.cols);
    let nf = n as f64;
    let mut x_mean = vec![0.0; d];
    for i in 0..n {
        for j in 0..d {
            x_mean[j] += x.get(i, j);
        }
    }
    for m in &mut x_mean {
        *m /= nf;
    }
    let y_mean = y.iter().sum::<f64>() / nf;

    // A = Xc'Xc, b = Xc'yc
    let mut a = vec![vec![0.0; d + 1]; d];
    for p in 0..d {
        for q in 0..d {
            let mut s = 0.0;
            for i in 0..n {
                s += (x.get(i, p) - x_mean[p]) * (x.get(i, q) - x_mean[q]);
            }
            a[p][q] = s;
        }
        let mut s = 0.0;
        for i in 0..n {
            s += (x.get(i, p) - x_mean[p]) * (y[i] - y_mean);
        }
        a[p][d] = s;
    }
    for col in 0..d {
        let pivot = (col..d)
            .max_by(|&r1, &r2| a[r1][col].abs().partial_cmp(&a[r2][col].abs()).unwrap())
            .unwrap();
        a.swap(col, pivot);
        let pv = a[col][col];
        for r in (col + 1)..d {
            let f = a[r][col] / pv;
            for c in col..=d {
                a[r][c] -= f * a[col][c];
            }
        }
    }
    let mut w = vec![0.0; d];
    for r in (0..d).rev() {
        let mut s = a[r][d];
        for c in (r + 1)..d {
            s -= a[r][c] * w[c];
        }
        w[r] = s / a[r][r];
    }
    let intercept = y_mean - w.iter().zip(&x_mean).map(|(wi, mi)| wi * mi).sum::<f64>();
    (w, intercept)
}

fn c7_lasso() -> CheckOutcome {
    let mut worst_zero = 0.0f64;
    let mut worst_ols = 0.0f64;
    for t in 0..20u64 {
        let mut rng = stream_rng(7000 + t, "lasso_check");
        let n = 40;
        let d = 6;
        let x = random_matrix(&mut rng, n, d, -2.0, 2.0);
        let true_w: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.5..1.5)).collect();
        let y: Vec<f64> = (0..n)
            .map(|i| {
                1.0 + x.row(i).iter().zip(&true_w).map(|(a, b)| a * b).sum::<f64>()
                    + rng.gen_range(-0.2..0.2)
            })
            .collect();

        // λ = 0 must reproduce the normal-equations solution
        let fit = lasso_fit(&x, &y, 0.0, 1e-12).map_err(|e| format!("case {t}: {e}"))?;
        let (w_ols, b_ols) = ols_normal_equations(&x, &y);
        for j in 0..d {
            let diff = (fit.weights[j] - w_ols[j]).abs();
            worst_ols = worst_ols.max(diff);
            if diff >= 1e-6 {
                return Err(format!(
                    "case {t} weight {j}: lasso {} vs normal equations {} (|Δ| {diff:.3e} >= 1e-6)",
                    fit.weights[j], w_ols[j]
                ));
            }
        }
        let bdiff = (fit.intercept - b_ols).abs();
        worst_ols = worst_ols.max(bdiff);
        if bdiff >= 1e-6 {
            return Err(format!("case {t}: intercept |Δ| {bdiff:.3e} >= 1e-6"));
        }

        // at the full-shrinkage threshold every weight must be exactly zero
        let lambda_max = full_shrinkage_lambda(&x, &y);
        let shrunk = lasso_fit(&x, &y, lambda_max, 1e-12).map_err(|e| format!("case {t}: {e}"))?;
        for (j, w) in shrunk.weights.iter().enumerate() {
            worst_zero = worst_zero.max(w.abs());
            if *w != 0.0 {
                return Err(format!(
                    "case {t} weight {j}: {w:e} not exactly zero at the full-shrinkage threshold"
                ));
            }
        }
    }
    Ok(format!(
        "20 cases: λ=0 within {worst_ols:.1e} of normal equations; full shrinkage exactly zero"
    ))
}

// ---------------------------------------------------------------------------
// criteria 8 and 9: orderings on synthetic cities
// ---------------------------------------------------------------------------

fn synth_plan(city: &str, seed: u64, models: Vec<ModelSpec>, reps: usize, epochs: usize) -> ExperimentPlan {
    ExperimentPlan {
        cities: vec![city.to_string()],
        models,
        test_years: vec![2017],
        repetitions: reps,
        base_seed: seed,
        gnn_template: TrainConfig {
            hidden: 16,
            dropout: 0.1,
            lr: 1e-3,
            epochs,
            ..TrainConfig::new(0)
        },
        grids: BaselineGrids {
            lasso: vec![
                BaselineParams::Lasso { lambda: 1e-3 },
                BaselineParams::Lasso { lambda: 1e-1 },
            ],
            forest: vec![BaselineParams::Forest { n_trees: 30, max_depth: Some(4) }],
            boosted: vec![BaselineParams::Boosted { rounds: 40, shrinkage: 0.1 }],
        },
        cv_folds: 3,
    }
}

fn mean_of(summary: &[(String, String, f64, f64)], label: &str) -> Result<f64, String> {
    summary
        .iter()
        .find(|(_, l, _, _)| l == label)
        .map(|(_, _, mean, _)| *mean)
        .ok_or_else(|| format!("label {label:?} missing from summary"))
}

/// Count seeds where the informative scenario beats the uninformative one.
fn ordering_hits(mode: DependenceMode, scenario: Scenario, label: &str) -> Result<usize, String> {
    let mut hits = 0usize;
    for s in 0..5u64 {
        let mut config = SynthConfig::new("orderville", mode);
        config.years = (2011, 2017);
        config.drift = 0.18;
        config.noise = 0.04;
        let city = generate_synthetic_city(&config, 800 + s).map_err(|e| e.to_string())?;
        let artifacts = prepare_artifacts(&city).map_err(|e| e.to_string())?;
        let mut plan = synth_plan(
            "orderville",
            derive_seed(810 + s, "ordering"),
            vec![ModelSpec::Gnn(scenario), ModelSpec::Gnn(Scenario::ALL[7])],
            5,
            500,
        );
        // 500 epochs must reach the converged regime for the gap to show
        plan.gnn_template.lr = 3e-3;
        plan.gnn_template.dropout = 0.0;
        let report = run_experiment(&plan, &[artifacts]).map_err(|e| e.to_string())?;
        let summary = summarize_runs(&report.runs);
        let informed = mean_of(&summary, label)?;
        let blind = mean_of(&summary, "None")?;
        if informed < blind {
            hits += 1;
        }
    }
    Ok(hits)
}

fn c8_scenario_ordering() -> CheckOutcome {
    let started = Instant::now();
    let area_hits = ordering_hits(DependenceMode::AreaDriven, Scenario::ALL[3], "Area info")?;
    let flow_hits = ordering_hits(DependenceMode::FlowDriven, Scenario::ALL[6], "Group profile")?;
    let secs = started.elapsed().as_secs_f64();
    if secs >= 900.0 {
        return Err(format!("took {secs:.1}s, budget is 900s"));
    }
    if area_hits < 4 {
        return Err(format!(
            "area-driven: Area info beat None in only {area_hits}/5 seeds (need >= 4)"
        ));
    }
    if flow_hits < 4 {
        return Err(format!(
            "flow-driven: Group profile beat None in only {flow_hits}/5 seeds (need >= 4)"
        ));
    }
    Ok(format!(
        "Area info < None in {area_hits}/5 area-driven seeds; Group profile < None in {flow_hits}/5 flow-driven seeds"
    ))
}

fn c9_naive_gap() -> CheckOutcome {
    let mut margins = Vec::new();
    for s in 0..5u64 {
        let mut config = SynthConfig::new("driftville", DependenceMode::AreaDriven);
        config.years = (2011, 2017);
        config.drift = 0.15;
        let city = generate_synthetic_city(&config, 900 + s).map_err(|e| e.to_string())?;
        let artifacts = prepare_artifacts(&city).map_err(|e| e.to_string())?;
        let plan = synth_plan(
            "driftville",
            derive_seed(910 + s, "naive_gap"),
            vec![ModelSpec::Gnn(Scenario::ALL[0]), ModelSpec::Naive, ModelSpec::Lasso],
            2,
            300,
        );
        let report = run_experiment(&plan, &[artifacts]).map_err(|e| e.to_string())?;
        let summary = summarize_runs(&report.runs);
        let naive = mean_of(&summary, "naive")?;
        let best = summary
            .iter()
            .filter(|(_, l, _, _)| l != "naive")
            .map(|(_, _, m, _)| *m)
            .fold(f64::INFINITY, f64::min);
        if naive <= best {
            return Err(format!(
                "seed {s}: historical-mean RMSE {naive:.4} <= best model RMSE {best:.4}"
            ));
        }
        margins.push(naive / best);
    }
    let worst = margins.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(format!(
        "historical mean worse than the best model in 5/5 seeds (ratio >= {worst:.2})"
    ))
}

// ---------------------------------------------------------------------------
// criterion 10: harness exactness
// ---------------------------------------------------------------------------

fn parse_results_csv(text: &str) -> Result<Vec<RunRecord>, String> {
    let mut runs = Vec::new();
    for line in text.lines() {
        if line.starts_with('#') || line.is_empty() || line.starts_with("city,") {
            continue;
        }
        let parts: Vec<&str> = line.split(',').collect();
        if parts.len() != 5 {
            return Err(format!("bad results row: {line:?}"));
        }
        runs.push(RunRecord {
            city: parts[0].to_string(),
            label: parts[1].to_string(),
            test_year: parts[2].parse().map_err(|e| format!("{e}"))?,
            repetition: parts[3].parse().map_err(|e| format!("{e}"))?,
            rmse: parts[4].parse().map_err(|e| format!("{e}"))?,
        });
    }
    Ok(runs)
}

fn c10_harness_exactness() -> CheckOutcome {
    // fixed examples, hand-computed
    let pred = Matrix::from_rows(&[vec![1.0, 2.0]]);
    let truth = Matrix::from_rows(&[vec![3.0, 4.0]]);
    let r = rmse(&pred, &truth).map_err(|e| e.to_string())?;
    if (r - 2.0).abs() >= 1e-9 {
        return Err(format!("rmse((1,2),(3,4)) = {r}, expected 2"));
    }
    let (mean, half) = ci95(&[1.0, 2.0, 3.0, 4.0]).map_err(|e| e.to_string())?;
    if (mean - 2.5).abs() >= 1e-9 {
        return Err(format!("ci95 mean {mean}, expected 2.5"));
    }
    if (half - 2.054260256760879).abs() >= 1e-9 {
        return Err(format!("ci95 half width {half}, expected 2.054260256760879"));
    }
    let t24 = t_quantile_975(24.0);
    if (t24 - 2.0638985616280205).abs() >= 1e-9 {
        return Err(format!("t quantile (24 df) {t24}, expected 2.0638985616280205"));
    }
    let (_, zero_half) = ci95(&[0.7; 6]).map_err(|e| e.to_string())?;
    if zero_half != 0.0 {
        return Err(format!("equal samples should give half width 0, got {zero_half}"));
    }

    // summary means must recompute exactly from the emitted per-run rows
    let mut config = SynthConfig::new("exactville", DependenceMode::AreaDriven);
    config.years = (2012, 2016);
    config.n_fsas = 5;
    config.n_users = 20;
    let city = generate_synthetic_city(&config, 1010).map_err(|e| e.to_string())?;
    let artifacts = prepare_artifacts(&city).map_err(|e| e.to_string())?;
    let mut plan = synth_plan(
        "exactville",
        1011,
        vec![ModelSpec::Gnn(Scenario::ALL[7]), ModelSpec::Naive, ModelSpec::Lasso],
        3,
        60,
    );
    plan.test_years = vec![2016];
    plan.gnn_template.hidden = 8;
    let report = run_experiment(&plan, &[artifacts]).map_err(|e| e.to_string())?;
    let csv = results_csv(&report);
    let reparsed = parse_results_csv(&csv)?;
    let direct = summarize_runs(&report.runs);
    let roundtrip = summarize_runs(&reparsed);
    if direct.len() != roundtrip.len() {
        return Err("summary row count changed across the CSV round trip".to_string());
    }
    for (a, b) in direct.iter().zip(&roundtrip) {
        if a.0 != b.0 || a.1 != b.1 {
            return Err(format!("summary keys diverged: {a:?} vs {b:?}"));
        }
        if a.2 != b.2 || a.3 != b.3 {
            return Err(format!(
                "summary for {}/{} not bit-exact after round trip: mean {} vs {}, half {} vs {}",
                a.0, a.1, a.2, b.2, a.3, b.3
            ));
        }
    }
    Ok(format!(
        "fixed values within 1e-9; {} summary rows recompute bit-exactly from CSV rows",
        direct.len()
    ))
}

// ---------------------------------------------------------------------------
// criterion 11: byte-identical reruns
// ---------------------------------------------------------------------------

fn c11_reproducibility() -> CheckOutcome {
    let run_once = || -> Result<String, String> {
        let mut config = SynthConfig::new("repeatville", DependenceMode::AreaDriven);
        config.years = (2012, 2016);
        config.n_fsas = 6;
        config.n_users = 24;
        let city = generate_synthetic_city(&config, 42).map_err(|e| e.to_string())?;
        let artifacts = prepare_artifacts(&city).map_err(|e| e.to_string())?;
        let mut plan = synth_plan(
            "repeatville",
            42,
            vec![ModelSpec::Gnn(Scenario::ALL[0]), ModelSpec::Naive, ModelSpec::Lasso],
            2,
            120,
        );
        plan.test_years = vec![2015, 2016];
        plan.gnn_template.hidden = 8;
        let report = run_experiment(&plan, &[artifacts]).map_err(|e| e.to_string())?;
        Ok(results_csv(&report))
    };
    let first = run_once()?;
    let second = run_once()?;
    if first != second {
        let byte = first
            .bytes()
            .zip(second.bytes())
            .position(|(a, b)| a != b)
            .unwrap_or(first.len().min(second.len()));
        return Err(format!("results differ between identical runs (first at byte {byte})"));
    }
    let rows = first.lines().count().saturating_sub(1);
    Ok(format!("two full pipeline runs produced byte-identical results ({rows} rows)"))
}

// ---------------------------------------------------------------------------
// criterion 12: real-data conformance (conditional)
// ---------------------------------------------------------------------------

/// Filter the raw academic dump down to one city's venue/review/user JSONL
/// files, keeping the loader's contract: the user file holds exactly the
/// authors of the city's in-window reviews on loadable venues.
fn prepare_city_files(
    dump: &std::path::Path,
    out: &std::path::Path,
    city_names: &[&str],
) -> Result<(std::path::PathBuf, std::path::PathBuf, std::path::PathBuf), String> {
    use std::io::{BufRead, BufReader, Write};

    let find = |stems: &[&str]| -> Result<std::path::PathBuf, String> {
        for stem in stems {
            let p = dump.join(stem);
            if p.exists() {
                return Ok(p);
            }
        }
        Err(format!("none of {stems:?} found under {}", dump.display()))
    };
    let business_path = find(&[
        "yelp_academic_dataset_business.json",
        "business.json",
        "businesses.jsonl",
    ])?;
    let review_path = find(&["yelp_academic_dataset_review.json", "review.json", "reviews.jsonl"])?;
    let user_path = find(&["yelp_academic_dataset_user.json", "user.json", "users.jsonl"])?;

    let io_err = |e: std::io::Error| format!("io: {e}");
    let venues_out = out.join("venues.jsonl");
    let reviews_out = out.join("reviews.jsonl");
    let users_out = out.join("users.jsonl");

    let wanted: BTreeSet<String> = city_names.iter().map(|c| c.to_lowercase()).collect();
    let mut keep_venues: BTreeSet<String> = BTreeSet::new();
    {
        let reader = BufReader::new(std::fs::File::open(&business_path).map_err(io_err)?);
        let mut w = std::io::BufWriter::new(std::fs::File::create(&venues_out).map_err(io_err)?);
        for line in reader.lines() {
            let line = line.map_err(io_err)?;
            if line.trim().is_empty() {
                continue;
            }
            let v: serde_json::Value = serde_json::from_str(&line).map_err(|e| format!("{e}"))?;
            let city = v["city"].as_str().unwrap_or("").trim().to_lowercase();
            if wanted.contains(&city) {
                if let Some(id) = v["business_id"].as_str() {
                    keep_venues.insert(id.to_string());
                    writeln!(w, "{line}").map_err(io_err)?;
                }
            }
        }
    }

    // second pass: reviews on kept venues; remember in-window authors
    let mut keep_users: BTreeSet<String> = BTreeSet::new();
    {
        let reader = BufReader::new(std::fs::File::open(&review_path).map_err(io_err)?);
        let mut w = std::io::BufWriter::new(std::fs::File::create(&reviews_out).map_err(io_err)?);
        for line in reader.lines() {
            let line = line.map_err(io_err)?;
            if line.trim().is_empty() {
                continue;
            }
            let v: serde_json::Value = serde_json::from_str(&line).map_err(|e| format!("{e}"))?;
            let bid = v["business_id"].as_str().unwrap_or("");
            if !keep_venues.contains(bid) {
                continue;
            }
            writeln!(w, "{line}").map_err(io_err)?;
            let year: i32 = v["date"]
                .as_str()
                .and_then(|d| d.get(..4))
                .and_then(|y| y.parse().ok())
                .unwrap_or(0);
            if (2011..=2018).contains(&year) {
                if let Some(uid) = v["user_id"].as_str() {
                    keep_users.insert(uid.to_string());
                }
            }
        }
    }

    {
        let reader = BufReader::new(std::fs::File::open(&user_path).map_err(io_err)?);
        let mut w = std::io::BufWriter::new(std::fs::File::create(&users_out).map_err(io_err)?);
        for line in reader.lines() {
            let line = line.map_err(io_err)?;
            if line.trim().is_empty() {
                continue;
            }
            let v: serde_json::Value = serde_json::from_str(&line).map_err(|e| format!("{e}"))?;
            if v["user_id"].as_str().is_some_and(|u| keep_users.contains(u)) {
                writeln!(w, "{line}").map_err(io_err)?;
            }
        }
    }
    Ok((venues_out, reviews_out, users_out))
}

fn c12_real_data() -> CheckOutcome {
    let dump = match std::env::var("SCENECAST_YELP_DIR") {
        Ok(d) => std::path::PathBuf::from(d),
        Err(_) => {
            return Ok(
                "SKIP: set SCENECAST_YELP_DIR to the academic dump directory to run this check"
                    .to_string(),
            )
        }
    };
    let work = std::env::temp_dir().join(format!("scenecast-real-{}", std::process::id()));
    std::fs::create_dir_all(&work).map_err(|e| format!("io: {e}"))?;

    let cities: [(&str, &[&str], usize); 3] = [
        ("montreal", &["montréal", "montreal"], 14),
        ("calgary", &["calgary"], 26),
        ("toronto", &["toronto"], 38),
    ];
    let mut details = Vec::new();
    for (city, names, expected_fsas) in cities {
        let dir = work.join(city);
        std::fs::create_dir_all(&dir).map_err(|e| format!("io: {e}"))?;
        let (venues, reviews, users) = prepare_city_files(&dump, &dir, names)?;
        let opts = LoadOptions::new(city);
        let dataset = load_dataset(&venues, &reviews, &users, &opts).map_err(|e| e.to_string())?;
        let stats = dataset.stats();
        if city == "calgary" {
            let expected = (7736usize, 97650usize, 34645usize, 774usize);
            let got = (stats.venues, stats.reviews, stats.users, stats.categories);
            if got != expected {
                return Err(format!(
                    "calgary counts {got:?} != expected {expected:?} (venues/reviews/users/categories)"
                ));
            }
        }
        let filtered = filter_fsas(&dataset, 30).map_err(|e| e.to_string())?;
        let n_fsas = filtered.fsas().len();
        if n_fsas != expected_fsas {
            return Err(format!("{city}: {n_fsas} FSAs after filtering, expected {expected_fsas}"));
        }
        details.push(format!("{city} {n_fsas} FSAs"));
    }
    Ok(format!("Calgary counts exact; {}", details.join(", ")))
}
