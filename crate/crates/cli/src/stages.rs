//! The pipeline stages behind each subcommand.
//!
//! Stage flow: ingest → (profile, scenes) → graph → train / evaluate →
//! report, with synth generating pipeline-ready inputs. Stages communicate
//! through stamped artifacts in the output directory and return a
//! machine-readable JSON summary on success.

use crate::artifacts::{
    read_csv_lines, read_json, write_csv, write_json, write_meta, write_svg, Stamped,
};
use crate::config::RunConfig;
use scenecast::baselines::FeatureTable;
use scenecast::eval::{
    self, chart_svg, default_models, fsa_centroids, run_experiment, BaselineGrids, CityArtifacts,
    ExperimentPlan, ModelSpec, RmseReport, RunRecord,
};
use scenecast::gnn::{self, TrainConfig};
use scenecast::graph::{apply_scenario, build_year_graph, MobilityGraph, Scenario};
use scenecast::ingest::{
    filter_fsas, load_boundary, load_codebook, load_census, load_dataset, Dataset, LoadOptions,
};
use scenecast::profiling::{
    build_documents, cluster_users, preprocess, select_topic_count, GroupModel, TopicEmbedding,
};
use scenecast::scenes::{build_scene_table, SceneTable};
use scenecast::lda;
use scenecast::seeds::derive_seed;
use scenecast::synth::{generate_synthetic_city, write_city, DependenceMode, SynthConfig};
use serde_json::{json, Value};
use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

type StageResult = Result<Value, String>;

fn ensure_out(cfg: &RunConfig) -> Result<PathBuf, String> {
    let out = cfg.out_dir();
    fs::create_dir_all(&out)
        .map_err(|e| format!("cannot create output directory {}: {e}", out.display()))?;
    Ok(out)
}

fn stage_err(e: impl std::fmt::Display) -> String {
    e.to_string()
}

/// The model/scenario list for this run: `all` means the full protocol
/// (every scenario plus every reference model); otherwise a comma-separated
/// list of labels.
fn resolve_models(cfg: &RunConfig) -> Result<Vec<ModelSpec>, String> {
    let raw = cfg.get("models");
    if raw == "all" {
        return Ok(default_models());
    }
    raw.split(',')
        .map(|label| {
            let label = label.trim();
            ModelSpec::from_label(label)
                .ok_or_else(|| format!("unknown model or scenario label `{label}`"))
        })
        .collect()
}

fn city_slug(city: &str) -> String {
    city.chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() {
                c.to_ascii_lowercase()
            } else {
                '_'
            }
        })
        .collect()
}

// ---------------------------------------------------------------------------
// ingest
// ---------------------------------------------------------------------------

pub fn ingest(cfg: &RunConfig) -> StageResult {
    let venue_path = cfg.require_path("venues")?;
    let review_path = cfg.require_path("reviews")?;
    let user_path = cfg.require_path("users")?;

    let mut opts = LoadOptions::new(cfg.get("city"));
    opts.study_window = (cfg.get_i32("year_start")?, cfg.get_i32("year_end")?);
    if !cfg.get("boundary").is_empty() {
        opts.boundary = load_boundary(Path::new(cfg.get("boundary"))).map_err(stage_err)?;
    }

    let full = load_dataset(&venue_path, &review_path, &user_path, &opts).map_err(stage_err)?;
    let kept = filter_fsas(&full, cfg.get_usize("min_venues")?).map_err(stage_err)?;

    let out = ensure_out(cfg)?;
    let hash = cfg.hash();
    let dataset_path = out.join("dataset.json");
    write_json(&dataset_path, &hash, &kept)?;
    write_meta(&out, "ingest", &hash)?;

    let stats = kept.stats();
    Ok(json!({
        "stage": "ingest",
        "city": kept.city,
        "venues": stats.venues,
        "reviews": stats.reviews,
        "users": stats.users,
        "categories": stats.categories,
        "fsas": kept.fsa_venues.len(),
        "dropped_venues": kept.dropped_venues,
        "dropped_reviews": kept.dropped_reviews,
        "out": dataset_path,
        "config_hash": hash,
    }))
}

// ---------------------------------------------------------------------------
// profile
// ---------------------------------------------------------------------------

/// Reviewer taste profile: the selected topic model's group clustering plus
/// the model-selection tables behind both choices.
#[derive(Debug, serde::Serialize, serde::Deserialize)]
pub struct ProfileArtifact {
    pub k_topics: usize,
    pub coherence_by_k: Vec<(usize, f64)>,
    pub groups: GroupModel,
    pub silhouette_by_k: Vec<(usize, f64)>,
}

pub fn profile(cfg: &RunConfig) -> StageResult {
    let out = ensure_out(cfg)?;
    let dataset: Stamped<Dataset> = read_json(&out.join("dataset.json"))?;
    let dataset = dataset.payload;

    let corpus = build_documents(&dataset).map_err(stage_err)?;
    let corpus = preprocess(&corpus).map_err(stage_err)?;

    let (t_min, t_max) = cfg.get_range("topics_range")?;
    let (k_min, k_max) = cfg.get_range("k_range")?;
    let gibbs_iters = cfg.get_usize("gibbs_iters")?;
    let top_n = cfg.get_usize("top_n")?;
    let seed = derive_seed(cfg.get_u64("seed")?, "profiling");

    let (k_topics, coherence_by_k) =
        select_topic_count(&corpus, t_min, t_max, seed, gibbs_iters, top_n).map_err(stage_err)?;
    // Refit the winner on its own stream (the same one the sweep used), so
    // the stored model is exactly the one whose coherence won.
    let model = lda::fit_lda(
        &corpus,
        k_topics,
        derive_seed(seed, &format!("lda_k{k_topics}")),
        gibbs_iters,
    )
    .map_err(stage_err)?;
    let embedding = TopicEmbedding::from_model(&model, &corpus);
    let (groups, silhouette_by_k) =
        cluster_users(&embedding, k_min, k_max, seed).map_err(stage_err)?;

    let artifact = ProfileArtifact {
        k_topics,
        coherence_by_k,
        groups,
        silhouette_by_k,
    };

    let hash = cfg.hash();
    let profile_path = out.join("profile.json");
    write_json(&profile_path, &hash, &artifact)?;
    write_meta(&out, "profile", &hash)?;

    Ok(json!({
        "stage": "profile",
        "city": dataset.city,
        "k_topics": artifact.k_topics,
        "k_groups": artifact.groups.k,
        "silhouette": artifact.groups.silhouette,
        "users_profiled": artifact.groups.assignment.len(),
        "out": profile_path,
        "config_hash": hash,
    }))
}

// ---------------------------------------------------------------------------
// scenes
// ---------------------------------------------------------------------------

pub fn scenes(cfg: &RunConfig) -> StageResult {
    let out = ensure_out(cfg)?;
    let dataset: Stamped<Dataset> = read_json(&out.join("dataset.json"))?;
    let dataset = dataset.payload;
    let codebook = load_codebook(&cfg.require_path("codebook")?).map_err(stage_err)?;

    let year_start = cfg.get_i32("year_start")?;
    let year_end = cfg.get_i32("year_end")?;
    let table = build_scene_table(&dataset, &codebook, year_start..=year_end).map_err(stage_err)?;

    let hash = cfg.hash();
    let scenes_path = out.join("scenes.json");
    write_json(&scenes_path, &hash, &table)?;
    write_csv(&out.join("scenes.csv"), &hash, &table.to_csv_string())?;
    write_meta(&out, "scenes", &hash)?;

    let fsas = table.years.values().next_back().map_or(0, |y| y.len());
    Ok(json!({
        "stage": "scenes",
        "city": table.city,
        "years": table.years.len(),
        "fsas": fsas,
        "out": scenes_path,
        "config_hash": hash,
    }))
}

// ---------------------------------------------------------------------------
// graph
// ---------------------------------------------------------------------------

pub fn graph(cfg: &RunConfig) -> StageResult {
    let out = ensure_out(cfg)?;
    let dataset: Stamped<Dataset> = read_json(&out.join("dataset.json"))?;
    let dataset = dataset.payload;
    let profile: Stamped<ProfileArtifact> = read_json(&out.join("profile.json"))?;
    let profile = profile.payload;
    let scenes: Stamped<SceneTable> = read_json(&out.join("scenes.json"))?;
    let scenes = scenes.payload;
    let census = load_census(&cfg.require_path("census")?).map_err(stage_err)?;

    let year_start = cfg.get_i32("year_start")?;
    let year_end = cfg.get_i32("year_end")?;
    let years: Vec<i32> = (year_start..=year_end).collect();

    let mut graphs: BTreeMap<i32, MobilityGraph> = BTreeMap::new();
    for &year in &years {
        let g = build_year_graph(
            &dataset,
            year,
            &profile.groups.assignment,
            profile.groups.k,
            &census,
            &scenes,
        )
        .map_err(stage_err)?;
        graphs.insert(year, g);
    }

    let features =
        FeatureTable::build(&scenes, Some(&census), years.iter().copied()).map_err(stage_err)?;
    let centroid_lon: BTreeMap<String, f64> = fsa_centroids(&dataset)
        .into_iter()
        .map(|(fsa, (_lat, lon))| (fsa, lon))
        .collect();

    let vertices = graphs.values().next().map_or(0, |g| g.vertices.len());
    let edges: usize = graphs.values().map(|g| g.edges.len()).sum();
    let artifact = CityArtifacts {
        city: dataset.city.clone(),
        graphs,
        scenes,
        features,
        centroid_lon,
    };

    let hash = cfg.hash();
    let artifacts_path = out.join("artifacts.json");
    write_json(&artifacts_path, &hash, &artifact)?;
    write_meta(&out, "graph", &hash)?;

    Ok(json!({
        "stage": "graph",
        "city": artifact.city,
        "years": years.len(),
        "vertices": vertices,
        "edges": edges,
        "out": artifacts_path,
        "config_hash": hash,
    }))
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

/// The artifact files named by the `artifacts` key (comma-separated),
/// defaulting to the one the graph stage writes into the output directory.
fn artifact_paths(cfg: &RunConfig) -> Vec<PathBuf> {
    let raw = cfg.get("artifacts");
    if raw.is_empty() {
        vec![cfg.out_dir().join("artifacts.json")]
    } else {
        raw.split(',').map(|p| PathBuf::from(p.trim())).collect()
    }
}

fn load_artifacts(cfg: &RunConfig) -> Result<Vec<CityArtifacts>, String> {
    artifact_paths(cfg)
        .iter()
        .map(|p| read_json::<CityArtifacts>(p).map(|s| s.payload))
        .collect()
}

/// The single scenario for `train`: `models=all` means the full-featured
/// graph; anything else must name exactly one scenario.
fn resolve_train_scenario(cfg: &RunConfig) -> Result<Scenario, String> {
    if cfg.get("models") == "all" {
        return Ok(Scenario::ALL[0]);
    }
    let models = resolve_models(cfg)?;
    match models.as_slice() {
        [ModelSpec::Gnn(s)] => Ok(*s),
        _ => Err("train expects exactly one scenario (pass --scenario NAME)".to_string()),
    }
}

pub fn train(cfg: &RunConfig) -> StageResult {
    let out = ensure_out(cfg)?;
    let arts = load_artifacts(cfg)?;
    let arts = arts
        .into_iter()
        .next()
        .ok_or("train needs one artifacts file")?;
    let scenario = resolve_train_scenario(cfg)?;

    let test_years = cfg.get_years("test_years")?;
    let first_test = *test_years.iter().min().expect("non-empty years");
    let masked: BTreeMap<i32, MobilityGraph> = arts
        .graphs
        .iter()
        .filter(|(&y, _)| y < first_test)
        .map(|(&y, g)| (y, apply_scenario(g, scenario)))
        .collect();
    if masked.len() < 2 {
        return Err(format!(
            "need at least two graph years before test year {first_test} to form training pairs"
        ));
    }

    let template = TrainConfig::new(0);
    let config = TrainConfig {
        hidden: cfg.get_usize("hidden")?,
        dropout: cfg.get_f64("dropout")?,
        lr: cfg.get_f64("lr")?,
        epochs: cfg.get_usize("epochs")?,
        msg_eps: template.msg_eps,
        seed: derive_seed(
            cfg.get_u64("seed")?,
            &format!("train/{}/{}", arts.city, scenario.name()),
        ),
    };
    let trained = gnn::train(&masked, &arts.scenes, &config).map_err(stage_err)?;

    let hash = cfg.hash();
    let checkpoint_path = out.join("checkpoint.json");
    let checkpoint: Value =
        serde_json::from_str(&trained.checkpoint_json()).map_err(stage_err)?;
    write_json(&checkpoint_path, &hash, &checkpoint)?;
    write_csv(&out.join("loss_trace.csv"), &hash, &trained.loss_trace_csv())?;
    write_meta(&out, "train", &hash)?;

    let final_mse = trained.loss_trace.last().map(|p| p.mse);
    Ok(json!({
        "stage": "train",
        "city": arts.city,
        "scenario": scenario.name(),
        "train_years": masked.len(),
        "epochs": config.epochs,
        "final_mse": final_mse,
        "out": checkpoint_path,
        "config_hash": hash,
    }))
}

// ---------------------------------------------------------------------------
// evaluate
// ---------------------------------------------------------------------------

pub fn evaluate(cfg: &RunConfig) -> StageResult {
    // Validate the whole plan configuration before touching any files.
    let template = TrainConfig::new(0);
    let mut plan = ExperimentPlan {
        cities: Vec::new(),
        models: resolve_models(cfg)?,
        test_years: cfg.get_years("test_years")?,
        repetitions: cfg.get_usize("reps")?,
        base_seed: cfg.get_u64("seed")?,
        gnn_template: TrainConfig {
            hidden: cfg.get_usize("hidden")?,
            dropout: cfg.get_f64("dropout")?,
            lr: cfg.get_f64("lr")?,
            epochs: cfg.get_usize("epochs")?,
            msg_eps: template.msg_eps,
            seed: 0,
        },
        grids: BaselineGrids::default(),
        cv_folds: cfg.get_usize("cv_folds")?,
    };

    let out = ensure_out(cfg)?;
    let artifacts = load_artifacts(cfg)?;
    if artifacts.is_empty() {
        return Err("evaluate needs at least one artifacts file".to_string());
    }
    plan.cities = artifacts.iter().map(|a| a.city.clone()).collect();

    let report = run_experiment(&plan, &artifacts).map_err(stage_err)?;

    let hash = cfg.hash();
    let results_path = out.join("results.csv");
    write_csv(&results_path, &hash, &eval::results_csv(&report))?;
    write_csv(&out.join("per_fsa.csv"), &hash, &eval::per_fsa_csv(&report))?;
    write_csv(
        &out.join("per_fsa_by_year.csv"),
        &hash,
        &eval::per_fsa_by_year_csv(&report),
    )?;
    write_csv(
        &out.join("east_west.csv"),
        &hash,
        &eval::east_west_csv(&report),
    )?;
    write_meta(&out, "evaluate", &hash)?;

    Ok(json!({
        "stage": "evaluate",
        "cities": plan.cities,
        "models": plan.models.iter().map(|m| m.label()).collect::<Vec<_>>(),
        "test_years": plan.test_years,
        "repetitions": plan.repetitions,
        "cells": report.cells.len(),
        "runs": report.runs.len(),
        "out": results_path,
        "config_hash": hash,
    }))
}

// ---------------------------------------------------------------------------
// report
// ---------------------------------------------------------------------------

const RESULTS_HEADER: &str = "city,model_or_scenario,test_year,repetition,rmse";

fn parse_results(path: &Path) -> Result<Vec<RunRecord>, String> {
    let lines = read_csv_lines(path)?;
    let mut it = lines.iter();
    match it.next() {
        Some(h) if h == RESULTS_HEADER => {}
        other => {
            return Err(format!(
                "{}: expected header `{RESULTS_HEADER}`, got `{}`",
                path.display(),
                other.map_or("<empty>", |s| s.as_str())
            ))
        }
    }
    let mut runs = Vec::new();
    for (i, line) in it.enumerate() {
        let fields: Vec<&str> = line.split(',').collect();
        let [city, label, test_year, repetition, rmse] = fields.as_slice() else {
            return Err(format!(
                "{}: row {} has {} fields, expected 5",
                path.display(),
                i + 2,
                fields.len()
            ));
        };
        let bad = |what: &str| format!("{}: row {}: bad {what}", path.display(), i + 2);
        runs.push(RunRecord {
            city: city.to_string(),
            label: label.to_string(),
            test_year: test_year.parse().map_err(|_| bad("test_year"))?,
            repetition: repetition.parse().map_err(|_| bad("repetition"))?,
            rmse: rmse.parse().map_err(|_| bad("rmse"))?,
        });
    }
    Ok(runs)
}

pub fn report(cfg: &RunConfig) -> StageResult {
    let out = ensure_out(cfg)?;
    let results_path = cfg.path_or_out("results", "results.csv");
    let runs = parse_results(&results_path)?;
    if runs.is_empty() {
        return Err(format!("{}: no run rows", results_path.display()));
    }

    let hash = cfg.hash();
    let summary_path = out.join("summary.csv");
    write_csv(&summary_path, &hash, &eval::summary_csv_from_runs(&runs))?;

    let mut cities: Vec<String> = Vec::new();
    for r in &runs {
        if !cities.contains(&r.city) {
            cities.push(r.city.clone());
        }
    }
    let chart_report = RmseReport {
        runs,
        cells: Vec::new(),
        per_fsa: Vec::new(),
        per_fsa_by_year: Vec::new(),
        east_west: Vec::new(),
    };
    let mut charts = Vec::new();
    for city in &cities {
        let chart_path = out.join(format!("chart_{}.svg", city_slug(city)));
        write_svg(&chart_path, &hash, &chart_svg(&chart_report, city))?;
        charts.push(chart_path);
    }
    write_meta(&out, "report", &hash)?;

    Ok(json!({
        "stage": "report",
        "cities": cities,
        "runs": chart_report.runs.len(),
        "summary": summary_path,
        "charts": charts,
        "config_hash": hash,
    }))
}

// ---------------------------------------------------------------------------
// synth
// ---------------------------------------------------------------------------

pub fn synth(cfg: &RunConfig) -> StageResult {
    let mode = DependenceMode::from_str(cfg.get("mode")).ok_or_else(|| {
        format!(
            "unknown dependence mode `{}` (expected area_driven, flow_driven, or none)",
            cfg.get("mode")
        )
    })?;
    let config = SynthConfig {
        city: cfg.get("city").to_string(),
        mode,
        n_fsas: cfg.get_usize("n_fsas")?,
        n_users: cfg.get_usize("n_users")?,
        n_groups: cfg.get_usize("n_groups")?,
        years: (cfg.get_i32("year_start")?, cfg.get_i32("year_end")?),
        noise: cfg.get_f64("noise")?,
        drift: cfg.get_f64("drift")?,
        venues_per_fsa_year: cfg.get_usize("venues_per_fsa_year")?,
    };

    let city = generate_synthetic_city(&config, cfg.get_u64("seed")?).map_err(stage_err)?;
    let out = ensure_out(cfg)?;
    let files = write_city(&city, &out).map_err(stage_err)?;

    let hash = cfg.hash();
    write_meta(&out, "synth", &hash)?;

    Ok(json!({
        "stage": "synth",
        "city": config.city,
        "mode": mode.as_str(),
        "fsas": config.n_fsas,
        "users": config.n_users,
        "files": files,
        "out": cfg.out_dir(),
        "config_hash": hash,
    }))
}
