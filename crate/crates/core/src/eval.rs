//! Experiment orchestration and reporting: RMSE, Student-t confidence
//! intervals, east/west regional breakdowns, the repetition plan with derived
//! per-cell seeds, and CSV/SVG report emission.

use std::collections::BTreeMap;

use rayon::prelude::*;
use statrs::distribution::{Continuous, ContinuousCDF, StudentsT};
use thiserror::Error;

use crate::baselines::{
    assemble_pairs, boosted_grid, fit_baseline, forest_grid, grid_search_cv, lasso_grid,
    naive_fit_predict, predict_baseline, BaselineError, BaselineParams, FeatureTable,
};
use crate::gnn::{self, GnnError, TrainConfig, scene_target_matrix};
use crate::graph::{apply_scenario, MobilityGraph, Scenario};
use crate::ingest::Dataset;
use crate::linalg::Matrix;
use crate::scenes::SceneTable;
use crate::seeds::derive_seed;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("shape mismatch: predictions {pred:?} vs truth {truth:?}")]
    ShapeMismatch {
        pred: (usize, usize),
        truth: (usize, usize),
    },
    #[error("confidence interval needs at least 2 samples, got {0}")]
    TooFewSamples(usize),
    #[error("no centroid longitude for fsa {0}")]
    MissingCentroid(String),
    #[error("city {0} has no prepared artifacts")]
    UnknownCity(String),
    #[error("cell {cell}: no graph for input year {year}")]
    MissingGraph { cell: String, year: i32 },
    #[error("cell {cell}: no training years before the test year")]
    NoTrainingYears { cell: String },
    #[error("cell {cell}: {source}")]
    GnnFailure { cell: String, source: GnnError },
    #[error("cell {cell}: {source}")]
    BaselineFailure { cell: String, source: BaselineError },
}

pub type Result<T> = std::result::Result<T, EvalError>;

// ---------------------------------------------------------------------------
// metrics
// ---------------------------------------------------------------------------

/// Root mean squared error over every cell of the two matrices.
pub fn rmse(pred: &Matrix, truth: &Matrix) -> Result<f64> {
    if pred.shape() != truth.shape() {
        return Err(EvalError::ShapeMismatch {
            pred: pred.shape(),
            truth: truth.shape(),
        });
    }
    let mut sum = 0.0;
    for i in 0..pred.rows {
        for j in 0..pred.cols {
            let d = pred.get(i, j) - truth.get(i, j);
            sum += d * d;
        }
    }
    Ok((sum / (pred.rows * pred.cols) as f64).sqrt())
}

/// Two-sided 97.5% Student-t quantile, polished with Newton steps on the CDF
/// so hand-computed reference intervals reproduce to 1e-9.
pub fn t_quantile_975(df: f64) -> f64 {
    let dist = StudentsT::new(0.0, 1.0, df).expect("positive degrees of freedom");
    let mut x = dist.inverse_cdf(0.975);
    for _ in 0..8 {
        let err = dist.cdf(x) - 0.975;
        let slope = dist.pdf(x);
        if slope <= 0.0 {
            break;
        }
        let step = err / slope;
        x -= step;
        if step.abs() < 1e-15 * x.abs().max(1.0) {
            break;
        }
    }
    x
}

/// Student-t 95% interval: (mean, t_{0.975, n-1} * s / sqrt(n)).
pub fn ci95(samples: &[f64]) -> Result<(f64, f64)> {
    let n = samples.len();
    if n < 2 {
        return Err(EvalError::TooFewSamples(n));
    }
    if samples.windows(2).all(|w| w[0] == w[1]) {
        // identical samples: the mean is the sample and the width is exactly 0
        return Ok((samples[0], 0.0));
    }
    let nf = n as f64;
    let mean = samples.iter().sum::<f64>() / nf;
    let var = samples.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (nf - 1.0);
    let t = t_quantile_975(nf - 1.0);
    Ok((mean, t * var.sqrt() / nf.sqrt()))
}

// ---------------------------------------------------------------------------
// regions
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, serde::Serialize)]
pub enum Region {
    East,
    West,
}

impl Region {
    pub fn as_str(&self) -> &'static str {
        match self {
            Region::East => "east",
            Region::West => "west",
        }
    }
}

/// Mean venue coordinates per FSA; venues without coordinates are skipped,
/// and FSAs whose venues all lack coordinates are absent from the map.
pub fn fsa_centroids(dataset: &Dataset) -> BTreeMap<String, (f64, f64)> {
    let mut acc: BTreeMap<String, (f64, f64, usize)> = BTreeMap::new();
    for venue in dataset.venues.values() {
        if let (Some(lat), Some(lon)) = (venue.lat, venue.lon) {
            let e = acc.entry(venue.fsa.clone()).or_insert((0.0, 0.0, 0));
            e.0 += lat;
            e.1 += lon;
            e.2 += 1;
        }
    }
    acc.into_iter()
        .map(|(fsa, (lat, lon, n))| (fsa, (lat / n as f64, lon / n as f64)))
        .collect()
}

/// West = strictly below the median centroid longitude; the median itself
/// (and everything east of it) is east.
pub fn east_west_split(
    fsas: &[String],
    centroid_lon: &BTreeMap<String, f64>,
) -> Result<BTreeMap<String, Region>> {
    let mut lons = Vec::with_capacity(fsas.len());
    for fsa in fsas {
        let lon = centroid_lon
            .get(fsa)
            .ok_or_else(|| EvalError::MissingCentroid(fsa.clone()))?;
        lons.push(*lon);
    }
    let mut sorted = lons.clone();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = sorted.len();
    let median = if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    };
    Ok(fsas
        .iter()
        .zip(lons)
        .map(|(fsa, lon)| {
            let region = if lon < median { Region::West } else { Region::East };
            (fsa.clone(), region)
        })
        .collect())
}

// ---------------------------------------------------------------------------
// plan
// ---------------------------------------------------------------------------

/// What gets trained in one experiment cell: the graph model under a feature
/// scenario, or one of the non-graph reference models.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ModelSpec {
    Gnn(Scenario),
    Naive,
    Lasso,
    Forest,
    Boosted,
}

impl ModelSpec {
    /// Label used in report rows: scenario name for the graph model,
    /// lowercase kind for the reference models.
    pub fn label(&self) -> String {
        match self {
            ModelSpec::Gnn(s) => s.name(),
            ModelSpec::Naive => "naive".to_string(),
            ModelSpec::Lasso => "lasso".to_string(),
            ModelSpec::Forest => "forest".to_string(),
            ModelSpec::Boosted => "boosted".to_string(),
        }
    }

    pub fn from_label(label: &str) -> Option<ModelSpec> {
        match label.to_lowercase().as_str() {
            "naive" => Some(ModelSpec::Naive),
            "lasso" => Some(ModelSpec::Lasso),
            "forest" => Some(ModelSpec::Forest),
            "boosted" => Some(ModelSpec::Boosted),
            _ => Scenario::from_name(label).map(ModelSpec::Gnn),
        }
    }
}

/// The 8 graph-feature scenarios followed by the 4 reference models.
pub fn default_models() -> Vec<ModelSpec> {
    let mut models: Vec<ModelSpec> = Scenario::ALL.iter().copied().map(ModelSpec::Gnn).collect();
    models.extend([
        ModelSpec::Naive,
        ModelSpec::Lasso,
        ModelSpec::Forest,
        ModelSpec::Boosted,
    ]);
    models
}

/// Hyperparameter grids searched per repetition for the tunable reference
/// models.
#[derive(Debug, Clone, PartialEq)]
pub struct BaselineGrids {
    pub lasso: Vec<BaselineParams>,
    pub forest: Vec<BaselineParams>,
    pub boosted: Vec<BaselineParams>,
}

impl Default for BaselineGrids {
    fn default() -> Self {
        BaselineGrids {
            lasso: lasso_grid(),
            forest: forest_grid(),
            boosted: boosted_grid(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentPlan {
    pub cities: Vec<String>,
    pub models: Vec<ModelSpec>,
    pub test_years: Vec<i32>,
    pub repetitions: usize,
    pub base_seed: u64,
    /// Template for graph-model training; the seed field is replaced by the
    /// derived per-cell seed.
    pub gnn_template: TrainConfig,
    pub grids: BaselineGrids,
    pub cv_folds: usize,
}

impl ExperimentPlan {
    /// The protocol used throughout: test years 2016-2018, 25 repetitions,
    /// all 8 scenarios plus the 4 reference models.
    pub fn standard(cities: Vec<String>, base_seed: u64) -> ExperimentPlan {
        ExperimentPlan {
            cities,
            models: default_models(),
            test_years: vec![2016, 2017, 2018],
            repetitions: 25,
            base_seed,
            gnn_template: TrainConfig::new(0),
            grids: BaselineGrids::default(),
            cv_folds: 5,
        }
    }

    /// Distinct stream per (city, model, test year, repetition).
    pub fn cell_seed(&self, city: &str, label: &str, test_year: i32, rep: usize) -> u64 {
        derive_seed(
            self.base_seed,
            &format!("cell/{city}/{label}/{test_year}/rep{rep}"),
        )
    }
}

/// Everything run_experiment needs for one city, built once upstream.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct CityArtifacts {
    pub city: String,
    /// Full-featured (unmasked) yearly graphs.
    pub graphs: BTreeMap<i32, MobilityGraph>,
    pub scenes: SceneTable,
    /// Scene + census feature vectors for the reference models.
    pub features: FeatureTable,
    /// FSA -> centroid longitude, for the east/west split.
    pub centroid_lon: BTreeMap<String, f64>,
}

// ---------------------------------------------------------------------------
// report records
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub city: String,
    pub label: String,
    pub test_year: i32,
    pub repetition: usize,
    pub rmse: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellSummary {
    pub city: String,
    pub label: String,
    pub test_year: i32,
    pub samples: Vec<f64>,
    pub mean: f64,
    pub ci95_half_width: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FsaRecord {
    pub city: String,
    pub label: String,
    pub fsa: String,
    pub mean_rmse: f64,
    pub region: Region,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FsaYearRecord {
    pub city: String,
    pub label: String,
    pub test_year: i32,
    pub fsa: String,
    pub mean_rmse: f64,
    pub region: Region,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegionRecord {
    pub city: String,
    pub label: String,
    pub region: Region,
    pub mean_rmse: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RmseReport {
    pub runs: Vec<RunRecord>,
    pub cells: Vec<CellSummary>,
    /// Per-FSA means averaged across repetitions and test years.
    pub per_fsa: Vec<FsaRecord>,
    /// Per-FSA means averaged across repetitions, one row per test year.
    pub per_fsa_by_year: Vec<FsaYearRecord>,
    pub east_west: Vec<RegionRecord>,
}

// ---------------------------------------------------------------------------
// experiment
// ---------------------------------------------------------------------------

struct CellOutcome {
    order: usize,
    runs: Vec<RunRecord>,
    /// Per-FSA RMSE averaged over repetitions for this cell.
    fsa_means: Vec<(String, f64)>,
}

fn per_fsa_rmse(pred: &Matrix, truth: &Matrix, row: usize) -> f64 {
    let mut sum = 0.0;
    for j in 0..pred.cols {
        let d = pred.get(row, j) - truth.get(row, j);
        sum += d * d;
    }
    (sum / pred.cols as f64).sqrt()
}

fn run_cell(
    plan: &ExperimentPlan,
    city: &CityArtifacts,
    model: ModelSpec,
    test_year: i32,
    order: usize,
) -> Result<CellOutcome> {
    let label = model.label();
    let cell = format!("{}/{}/{}", city.city, label, test_year);
    let mut runs = Vec::with_capacity(plan.repetitions);

    let (fsas, fsa_sums): (Vec<String>, Vec<f64>) = match model {
        ModelSpec::Gnn(scenario) => {
            let masked: BTreeMap<i32, MobilityGraph> = city
                .graphs
                .iter()
                .filter(|(&y, _)| y < test_year)
                .map(|(&y, g)| (y, apply_scenario(g, scenario)))
                .collect();
            if masked.is_empty() {
                return Err(EvalError::NoTrainingYears { cell });
            }
            let input = masked.get(&(test_year - 1)).ok_or(EvalError::MissingGraph {
                cell: cell.clone(),
                year: test_year - 1,
            })?;
            let fsas = input.vertices.clone();
            let truth = scene_target_matrix(&city.scenes, test_year, &fsas)
                .map_err(|source| EvalError::GnnFailure {
                    cell: cell.clone(),
                    source,
                })?;
            let mut fsa_sums = vec![0.0; fsas.len()];
            for rep in 0..plan.repetitions {
                let seed = plan.cell_seed(&city.city, &label, test_year, rep);
                let config = TrainConfig {
                    seed,
                    ..plan.gnn_template.clone()
                };
                let trained =
                    gnn::train(&masked, &city.scenes, &config).map_err(|source| {
                        EvalError::GnnFailure {
                            cell: cell.clone(),
                            source,
                        }
                    })?;
                let pred = gnn::predict(&trained, input).map_err(|source| {
                    EvalError::GnnFailure {
                        cell: cell.clone(),
                        source,
                    }
                })?;
                runs.push(RunRecord {
                    city: city.city.clone(),
                    label: label.clone(),
                    test_year,
                    repetition: rep,
                    rmse: rmse(&pred, &truth)?,
                });
                for (i, s) in fsa_sums.iter_mut().enumerate() {
                    *s += per_fsa_rmse(&pred, &truth, i);
                }
            }
            (fsas, fsa_sums)
        }
        _ => {
            let wrap = |source: BaselineError| EvalError::BaselineFailure {
                cell: cell.clone(),
                source,
            };
            let train_years: Vec<i32> = city
                .features
                .years
                .keys()
                .copied()
                .filter(|&y| y < test_year)
                .collect();
            if train_years.is_empty() {
                return Err(EvalError::NoTrainingYears { cell });
            }
            let fsas = city.features.fsas();
            let truth = scene_target_matrix(&city.scenes, test_year, &fsas)
                .map_err(|source| EvalError::GnnFailure {
                    cell: cell.clone(),
                    source,
                })?;
            let mut fsa_sums = vec![0.0; fsas.len()];

            // feature rows for the prediction input year (test - 1)
            let input_rows = || -> std::result::Result<Matrix, BaselineError> {
                let mut m = Matrix::zeros(fsas.len(), city.features.width);
                for (i, fsa) in fsas.iter().enumerate() {
                    m.row_mut(i)
                        .copy_from_slice(city.features.row(test_year - 1, fsa)?);
                }
                Ok(m)
            };

            match model {
                ModelSpec::Naive => {
                    let pred =
                        naive_fit_predict(&city.features, &train_years, &fsas).map_err(wrap)?;
                    let score = rmse(&pred, &truth)?;
                    for rep in 0..plan.repetitions {
                        runs.push(RunRecord {
                            city: city.city.clone(),
                            label: label.clone(),
                            test_year,
                            repetition: rep,
                            rmse: score,
                        });
                    }
                    for (i, s) in fsa_sums.iter_mut().enumerate() {
                        *s += plan.repetitions as f64 * per_fsa_rmse(&pred, &truth, i);
                    }
                }
                ModelSpec::Lasso | ModelSpec::Forest | ModelSpec::Boosted => {
                    let (x, y) = assemble_pairs(&city.features, &train_years).map_err(wrap)?;
                    let input = input_rows().map_err(wrap)?;
                    let grid = match model {
                        ModelSpec::Lasso => &plan.grids.lasso,
                        ModelSpec::Forest => &plan.grids.forest,
                        _ => &plan.grids.boosted,
                    };
                    for rep in 0..plan.repetitions {
                        let seed = plan.cell_seed(&city.city, &label, test_year, rep);
                        let report =
                            grid_search_cv(grid, &x, &y, plan.cv_folds, seed).map_err(wrap)?;
                        let fitted =
                            fit_baseline(report.best, &x, &y, derive_seed(seed, "final_fit"))
                                .map_err(wrap)?;
                        let pred = predict_baseline(&fitted, &input);
                        runs.push(RunRecord {
                            city: city.city.clone(),
                            label: label.clone(),
                            test_year,
                            repetition: rep,
                            rmse: rmse(&pred, &truth)?,
                        });
                        for (i, s) in fsa_sums.iter_mut().enumerate() {
                            *s += per_fsa_rmse(&pred, &truth, i);
                        }
                    }
                }
                ModelSpec::Gnn(_) => unreachable!(),
            }
            (fsas, fsa_sums)
        }
    };

    let fsa_means = fsas
        .into_iter()
        .zip(fsa_sums)
        .map(|(fsa, sum)| (fsa, sum / plan.repetitions as f64))
        .collect();
    Ok(CellOutcome {
        order,
        runs,
        fsa_means,
    })
}

/// Runs every (city, model, test year) cell for `plan.repetitions`
/// repetitions and aggregates the report. Cells execute in a work pool;
/// output order is deterministic regardless of scheduling.
pub fn run_experiment(plan: &ExperimentPlan, artifacts: &[CityArtifacts]) -> Result<RmseReport> {
    // resolve cities up front so a typo fails before any training
    let mut cities = Vec::with_capacity(plan.cities.len());
    for name in &plan.cities {
        cities.push(
            artifacts
                .iter()
                .find(|a| &a.city == name)
                .ok_or_else(|| EvalError::UnknownCity(name.clone()))?,
        );
    }

    let mut cells = Vec::new();
    for city in &cities {
        for model in &plan.models {
            for &test_year in &plan.test_years {
                cells.push((cells.len(), *city, *model, test_year));
            }
        }
    }

    let mut outcomes = cells
        .par_iter()
        .map(|&(order, city, model, test_year)| run_cell(plan, city, model, test_year, order))
        .collect::<Result<Vec<CellOutcome>>>()?;
    outcomes.sort_by_key(|o| o.order);

    let mut report = RmseReport {
        runs: Vec::new(),
        cells: Vec::new(),
        per_fsa: Vec::new(),
        per_fsa_by_year: Vec::new(),
        east_west: Vec::new(),
    };

    // regions per city, computed once
    let mut regions: BTreeMap<&str, BTreeMap<String, Region>> = BTreeMap::new();
    for city in &cities {
        let fsas = city.features.fsas();
        regions.insert(
            city.city.as_str(),
            east_west_split(&fsas, &city.centroid_lon)?,
        );
    }

    // (city, label) -> fsa -> yearly means, in insertion order
    let mut fsa_year_means: Vec<((String, String), BTreeMap<String, Vec<f64>>)> = Vec::new();
    for (outcome, &(_, city, model, test_year)) in outcomes.iter().zip(&cells) {
        let samples: Vec<f64> = outcome.runs.iter().map(|r| r.rmse).collect();
        let (mean, half) = if samples.len() >= 2 {
            ci95(&samples)?
        } else {
            (samples.first().copied().unwrap_or(0.0), 0.0)
        };
        report.cells.push(CellSummary {
            city: city.city.clone(),
            label: model.label(),
            test_year,
            samples,
            mean,
            ci95_half_width: half,
        });
        report.runs.extend(outcome.runs.iter().cloned());

        let region_map = &regions[city.city.as_str()];
        let key = (city.city.clone(), model.label());
        for (fsa, mean) in &outcome.fsa_means {
            report.per_fsa_by_year.push(FsaYearRecord {
                city: city.city.clone(),
                label: model.label(),
                test_year,
                fsa: fsa.clone(),
                mean_rmse: *mean,
                region: region_map[fsa],
            });
            match fsa_year_means.iter_mut().find(|(k, _)| *k == key) {
                Some((_, map)) => map.entry(fsa.clone()).or_default().push(*mean),
                None => {
                    let mut map: BTreeMap<String, Vec<f64>> = BTreeMap::new();
                    map.insert(fsa.clone(), vec![*mean]);
                    fsa_year_means.push((key.clone(), map));
                }
            }
        }
    }

    for ((city, label), fsa_map) in &fsa_year_means {
        let region_map = &regions[city.as_str()];
        let mut region_acc: BTreeMap<Region, (f64, usize)> = BTreeMap::new();
        for (fsa, year_means) in fsa_map {
            let mean = year_means.iter().sum::<f64>() / year_means.len() as f64;
            let region = region_map[fsa];
            report.per_fsa.push(FsaRecord {
                city: city.clone(),
                label: label.clone(),
                fsa: fsa.clone(),
                mean_rmse: mean,
                region,
            });
            let e = region_acc.entry(region).or_insert((0.0, 0));
            e.0 += mean;
            e.1 += 1;
        }
        for (region, (sum, n)) in region_acc {
            report.east_west.push(RegionRecord {
                city: city.clone(),
                label: label.clone(),
                region,
                mean_rmse: sum / n as f64,
            });
        }
    }

    Ok(report)
}

// ---------------------------------------------------------------------------
// emission
// ---------------------------------------------------------------------------

/// One row per run: city, model_or_scenario, test_year, repetition, rmse.
pub fn results_csv(report: &RmseReport) -> String {
    let mut out = String::from("city,model_or_scenario,test_year,repetition,rmse\n");
    for r in &report.runs {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            r.city, r.label, r.test_year, r.repetition, r.rmse
        ));
    }
    out
}

/// Pooled (city, label) summaries recomputed from the per-run records, in
/// first-appearance order.
pub fn summarize_runs(runs: &[RunRecord]) -> Vec<(String, String, f64, f64)> {
    let mut order: Vec<(String, String)> = Vec::new();
    let mut samples: BTreeMap<(String, String), Vec<f64>> = BTreeMap::new();
    for r in runs {
        let key = (r.city.clone(), r.label.clone());
        if !samples.contains_key(&key) {
            order.push(key.clone());
        }
        samples.entry(key).or_default().push(r.rmse);
    }
    order
        .into_iter()
        .map(|key| {
            let vals = &samples[&key];
            let (mean, half) = if vals.len() >= 2 {
                ci95(vals).expect("two or more samples")
            } else {
                (vals[0], 0.0)
            };
            (key.0, key.1, mean, half)
        })
        .collect()
}

/// city, model_or_scenario, mean, ci95_half_width — pooled across test years
/// and repetitions, recomputed from the same rows results_csv emits.
pub fn summary_csv(report: &RmseReport) -> String {
    summary_csv_from_runs(&report.runs)
}

/// Same emission, but directly from per-run records (e.g. a parsed
/// results.csv), so downstream recomputation is byte-identical.
pub fn summary_csv_from_runs(runs: &[RunRecord]) -> String {
    let mut out = String::from("city,model_or_scenario,mean,ci95_half_width\n");
    for (city, label, mean, half) in summarize_runs(runs) {
        out.push_str(&format!("{city},{label},{mean},{half}\n"));
    }
    out
}

/// city, model_or_scenario, fsa, mean_rmse, region — averaged across
/// repetitions and test years.
pub fn per_fsa_csv(report: &RmseReport) -> String {
    let mut out = String::from("city,model_or_scenario,fsa,mean_rmse,region\n");
    for r in &report.per_fsa {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            r.city,
            r.label,
            r.fsa,
            r.mean_rmse,
            r.region.as_str()
        ));
    }
    out
}

/// Same as per_fsa_csv but one row per test year instead of averaging them.
pub fn per_fsa_by_year_csv(report: &RmseReport) -> String {
    let mut out = String::from("city,model_or_scenario,test_year,fsa,mean_rmse,region\n");
    for r in &report.per_fsa_by_year {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.city,
            r.label,
            r.test_year,
            r.fsa,
            r.mean_rmse,
            r.region.as_str()
        ));
    }
    out
}

/// city, model_or_scenario, region, mean_rmse.
pub fn east_west_csv(report: &RmseReport) -> String {
    let mut out = String::from("city,model_or_scenario,region,mean_rmse\n");
    for r in &report.east_west {
        out.push_str(&format!(
            "{},{},{},{}\n",
            r.city,
            r.label,
            r.region.as_str(),
            r.mean_rmse
        ));
    }
    out
}

/// Grouped bar chart (one bar per model/scenario, CI whiskers) for one city,
/// as a standalone SVG document.
pub fn chart_svg(report: &RmseReport, city: &str) -> String {
    let rows: Vec<(String, f64, f64)> = summarize_runs(&report.runs)
        .into_iter()
        .filter(|(c, _, _, _)| c == city)
        .map(|(_, label, mean, half)| (label, mean, half))
        .collect();

    let bar_w = 34.0;
    let gap = 16.0;
    let left = 70.0;
    let top = 40.0;
    let plot_h = 260.0;
    let bottom = 150.0;
    let plot_w = rows.len() as f64 * (bar_w + gap) + gap;
    let width = left + plot_w + 30.0;
    let height = top + plot_h + bottom;

    let max_y = rows
        .iter()
        .map(|(_, m, h)| m + h)
        .fold(0.0f64, f64::max)
        .max(1e-9)
        * 1.15;
    let y_of = |v: f64| top + plot_h - v / max_y * plot_h;

    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width}\" height=\"{height}\" \
         viewBox=\"0 0 {width} {height}\" font-family=\"sans-serif\" font-size=\"11\">\n"
    ));
    svg.push_str(&format!(
        "  <text x=\"{}\" y=\"20\" font-size=\"14\">{} — mean RMSE with 95% CI</text>\n",
        left, city
    ));
    // axes
    svg.push_str(&format!(
        "  <line x1=\"{left}\" y1=\"{top}\" x2=\"{left}\" y2=\"{}\" stroke=\"black\"/>\n",
        top + plot_h
    ));
    svg.push_str(&format!(
        "  <line x1=\"{left}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>\n",
        top + plot_h,
        left + plot_w,
        top + plot_h
    ));
    // y ticks
    for k in 0..=4 {
        let v = max_y * k as f64 / 4.0;
        let y = y_of(v);
        svg.push_str(&format!(
            "  <line x1=\"{}\" y1=\"{y}\" x2=\"{left}\" y2=\"{y}\" stroke=\"black\"/>\n",
            left - 5.0
        ));
        svg.push_str(&format!(
            "  <text x=\"{}\" y=\"{}\" text-anchor=\"end\">{:.3}</text>\n",
            left - 8.0,
            y + 4.0,
            v
        ));
    }
    // bars + whiskers + labels
    for (i, (label, mean, half)) in rows.iter().enumerate() {
        let x = left + gap + i as f64 * (bar_w + gap);
        let y = y_of(*mean);
        svg.push_str(&format!(
            "  <rect x=\"{x}\" y=\"{y}\" width=\"{bar_w}\" height=\"{}\" fill=\"#4878a8\"/>\n",
            top + plot_h - y
        ));
        let cx = x + bar_w / 2.0;
        let y_hi = y_of(mean + half);
        let y_lo = y_of((mean - half).max(0.0));
        svg.push_str(&format!(
            "  <line x1=\"{cx}\" y1=\"{y_hi}\" x2=\"{cx}\" y2=\"{y_lo}\" stroke=\"black\"/>\n"
        ));
        for wy in [y_hi, y_lo] {
            svg.push_str(&format!(
                "  <line x1=\"{}\" y1=\"{wy}\" x2=\"{}\" y2=\"{wy}\" stroke=\"black\"/>\n",
                cx - 6.0,
                cx + 6.0
            ));
        }
        svg.push_str(&format!(
            "  <text x=\"{cx}\" y=\"{}\" text-anchor=\"end\" transform=\"rotate(-45 {cx} {})\">{label}</text>\n",
            top + plot_h + 14.0,
            top + plot_h + 14.0
        ));
    }
    svg.push_str("</svg>\n");
    svg
}
