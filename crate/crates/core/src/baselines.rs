//! Non-graph predictors over per-FSA feature vectors: naive historical mean,
//! L1 regression, random forests, and gradient-boosted trees, plus the 5-fold
//! grid search used to tune them.
//!
//! Every learned model treats the 15 output dimensions as independent
//! single-output regressors; the naive baseline is inherently vector-valued.
//! Training consumes (features at year y -> scene scores at year y+1) pairs
//! over consecutive years, mirroring how the graph model is supervised.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::ingest::{Census, CENSUS_DIMS, SCENE_DIMS};
use crate::lasso::{lasso_fit, LassoFit};
use crate::linalg::Matrix;
use crate::scenes::SceneTable;
use crate::seeds::derive_seed;
use crate::tree::{fit_boosted, fit_forest, Boosted, Forest};

#[derive(Debug, Error)]
pub enum BaselineError {
    #[error("no feature vector for fsa {fsa} in year {year}")]
    MissingFsa { year: i32, fsa: String },
    #[error("year {0} not present in the feature table")]
    MissingYear(i32),
    #[error("feature table FSA sets differ between years {0} and {1}")]
    MisalignedYears(i32, i32),
    #[error("need at least one training year")]
    NoTrainingYears,
    #[error("need at least two consecutive training years to form pairs")]
    NoPairs,
    #[error("empty hyperparameter grid")]
    EmptyGrid,
    #[error("{n} samples is too few for {folds}-fold cross-validation")]
    TooFewSamples { n: usize, folds: usize },
    #[error("grid kind mismatch: expected {expected}, got {got}")]
    KindMismatch { expected: String, got: String },
    #[error(transparent)]
    Lasso(#[from] crate::lasso::LassoError),
    #[error(transparent)]
    Tree(#[from] crate::tree::TreeError),
    #[error(transparent)]
    Ingest(#[from] crate::ingest::IngestError),
}

pub type Result<T> = std::result::Result<T, BaselineError>;

/// Per-FSA feature vectors by year: the 15 scene scores first, then the 7
/// census attributes when attached (width 22), else width 15. FSA sets are
/// identical across years.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct FeatureTable {
    pub city: String,
    pub width: usize,
    pub years: BTreeMap<i32, BTreeMap<String, Vec<f64>>>,
}

impl FeatureTable {
    /// Assembles feature vectors from scored scenes plus (optionally) the
    /// census vintage mapped to each year.
    pub fn build(
        scenes: &SceneTable,
        census: Option<&Census>,
        years: impl IntoIterator<Item = i32>,
    ) -> Result<FeatureTable> {
        let width = SCENE_DIMS + if census.is_some() { CENSUS_DIMS } else { 0 };
        let mut table = BTreeMap::new();
        for year in years {
            let year_scenes = scenes
                .years
                .get(&year)
                .ok_or(BaselineError::MissingYear(year))?;
            let mut rows = BTreeMap::new();
            for (fsa, entry) in year_scenes {
                let mut vec = entry.dims.to_vec();
                if let Some(census) = census {
                    vec.extend_from_slice(census.row(year, fsa)?);
                }
                rows.insert(fsa.clone(), vec);
            }
            table.insert(year, rows);
        }
        let out = FeatureTable {
            city: scenes.city.clone(),
            width,
            years: table,
        };
        out.check_alignment()?;
        Ok(out)
    }

    fn check_alignment(&self) -> Result<()> {
        let mut iter = self.years.iter();
        if let Some((&first_year, first)) = iter.next() {
            for (&year, rows) in iter {
                if !first.keys().eq(rows.keys()) {
                    return Err(BaselineError::MisalignedYears(first_year, year));
                }
            }
        }
        Ok(())
    }

    pub fn row(&self, year: i32, fsa: &str) -> Result<&[f64]> {
        self.years
            .get(&year)
            .ok_or(BaselineError::MissingYear(year))?
            .get(fsa)
            .map(|v| v.as_slice())
            .ok_or_else(|| BaselineError::MissingFsa {
                year,
                fsa: fsa.to_string(),
            })
    }

    /// Sorted FSA list (identical for every year).
    pub fn fsas(&self) -> Vec<String> {
        self.years
            .values()
            .next()
            .map(|rows| rows.keys().cloned().collect())
            .unwrap_or_default()
    }
}

/// Per test FSA, the mean over training years of its scene-score block.
pub fn naive_fit_predict(
    table: &FeatureTable,
    training_years: &[i32],
    test_fsas: &[String],
) -> Result<Matrix> {
    if training_years.is_empty() {
        return Err(BaselineError::NoTrainingYears);
    }
    let mut out = Matrix::zeros(test_fsas.len(), SCENE_DIMS);
    for (r, fsa) in test_fsas.iter().enumerate() {
        let mut acc = [0.0f64; SCENE_DIMS];
        for &year in training_years {
            let row = table.row(year, fsa)?;
            for (a, v) in acc.iter_mut().zip(row) {
                *a += v;
            }
        }
        for (c, a) in acc.iter().enumerate() {
            out.set(r, c, a / training_years.len() as f64);
        }
    }
    Ok(out)
}

/// Stacks supervised pairs (features at y -> scene block at y+1) for every
/// consecutive pair of `years` present in the table. Rows are ordered by
/// pair, then FSA (sorted).
pub fn assemble_pairs(table: &FeatureTable, years: &[i32]) -> Result<(Matrix, Matrix)> {
    let mut sorted: Vec<i32> = years.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    let pairs: Vec<(i32, i32)> = sorted
        .windows(2)
        .filter(|w| w[1] == w[0] + 1)
        .map(|w| (w[0], w[1]))
        .collect();
    if pairs.is_empty() {
        return Err(BaselineError::NoPairs);
    }
    let fsas = table.fsas();
    let n = pairs.len() * fsas.len();
    let mut x = Matrix::zeros(n, table.width);
    let mut y = Matrix::zeros(n, SCENE_DIMS);
    let mut r = 0;
    for &(y0, y1) in &pairs {
        for fsa in &fsas {
            let feat = table.row(y0, fsa)?;
            let target = &table.row(y1, fsa)?[..SCENE_DIMS];
            x.row_mut(r).copy_from_slice(feat);
            y.row_mut(r).copy_from_slice(target);
            r += 1;
        }
    }
    Ok((x, y))
}

/// One hyperparameter point. `Naive` has none.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub enum BaselineParams {
    Naive,
    Lasso { lambda: f64 },
    Forest { n_trees: usize, max_depth: Option<usize> },
    Boosted { rounds: usize, shrinkage: f64 },
}

impl BaselineParams {
    pub fn kind(&self) -> &'static str {
        match self {
            BaselineParams::Naive => "naive",
            BaselineParams::Lasso { .. } => "lasso",
            BaselineParams::Forest { .. } => "forest",
            BaselineParams::Boosted { .. } => "boosted",
        }
    }
}

/// Default search grids.
pub fn lasso_grid() -> Vec<BaselineParams> {
    (0..7)
        .map(|k| BaselineParams::Lasso {
            lambda: 10f64.powf(-4.0 + k as f64 * 4.0 / 6.0),
        })
        .collect()
}

pub fn forest_grid() -> Vec<BaselineParams> {
    let mut grid = Vec::new();
    for n_trees in [100, 300] {
        for max_depth in [Some(3), Some(6), None] {
            grid.push(BaselineParams::Forest { n_trees, max_depth });
        }
    }
    grid
}

pub fn boosted_grid() -> Vec<BaselineParams> {
    let mut grid = Vec::new();
    for rounds in [100, 300] {
        for shrinkage in [0.05, 0.1] {
            grid.push(BaselineParams::Boosted { rounds, shrinkage });
        }
    }
    grid
}

/// A fitted model: 15 independent per-dimension regressors.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub enum BaselineModel {
    Lasso { fits: Vec<LassoFit> },
    Forest { forests: Vec<Forest> },
    Boosted { models: Vec<Boosted> },
}

const LASSO_TOL: f64 = 1e-8;

/// Fits one regressor per output dimension. Tree-based fits draw their
/// randomness from a per-dimension stream of `seed`.
pub fn fit_baseline(params: BaselineParams, x: &Matrix, y: &Matrix, seed: u64) -> Result<BaselineModel> {
    let column = |d: usize| -> Vec<f64> { (0..y.rows).map(|i| y.get(i, d)).collect() };
    match params {
        BaselineParams::Naive => Err(BaselineError::KindMismatch {
            expected: "lasso | forest | boosted".into(),
            got: "naive".into(),
        }),
        BaselineParams::Lasso { lambda } => {
            let mut fits = Vec::with_capacity(y.cols);
            for d in 0..y.cols {
                fits.push(lasso_fit(x, &column(d), lambda, LASSO_TOL)?);
            }
            Ok(BaselineModel::Lasso { fits })
        }
        BaselineParams::Forest { n_trees, max_depth } => {
            let mut forests = Vec::with_capacity(y.cols);
            for d in 0..y.cols {
                let mut rng =
                    ChaCha8Rng::seed_from_u64(derive_seed(seed, &format!("forest_dim{d}")));
                forests.push(fit_forest(x, &column(d), n_trees, max_depth, 1, &mut rng)?);
            }
            Ok(BaselineModel::Forest { forests })
        }
        BaselineParams::Boosted { rounds, shrinkage } => {
            let mut models = Vec::with_capacity(y.cols);
            for d in 0..y.cols {
                let mut rng =
                    ChaCha8Rng::seed_from_u64(derive_seed(seed, &format!("boosted_dim{d}")));
                models.push(fit_boosted(x, &column(d), rounds, shrinkage, &mut rng)?);
            }
            Ok(BaselineModel::Boosted { models })
        }
    }
}

pub fn predict_baseline(model: &BaselineModel, x: &Matrix) -> Matrix {
    let cols = match model {
        BaselineModel::Lasso { fits } => fits.len(),
        BaselineModel::Forest { forests } => forests.len(),
        BaselineModel::Boosted { models } => models.len(),
    };
    let mut out = Matrix::zeros(x.rows, cols);
    for i in 0..x.rows {
        let row = x.row(i);
        for d in 0..cols {
            let v = match model {
                BaselineModel::Lasso { fits } => fits[d].predict_row(row),
                BaselineModel::Forest { forests } => forests[d].predict_row(row),
                BaselineModel::Boosted { models } => models[d].predict_row(row),
            };
            out.set(i, d, v);
        }
    }
    out
}

fn rmse_cells(pred: &Matrix, truth: &Matrix) -> f64 {
    let mut sum = 0.0;
    for i in 0..pred.rows {
        for j in 0..pred.cols {
            let d = pred.get(i, j) - truth.get(i, j);
            sum += d * d;
        }
    }
    (sum / (pred.rows * pred.cols) as f64).sqrt()
}

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct CvReport {
    pub best: BaselineParams,
    /// (grid point, mean fold RMSE) in grid order.
    pub scores: Vec<(BaselineParams, f64)>,
}

/// Exhaustive grid evaluation under deterministic 5-fold splits; minimizes
/// the mean across folds of the held-out RMSE; ties keep the earliest grid
/// point.
pub fn grid_search_cv(
    grid: &[BaselineParams],
    x: &Matrix,
    y: &Matrix,
    folds: usize,
    seed: u64,
) -> Result<CvReport> {
    if grid.is_empty() {
        return Err(BaselineError::EmptyGrid);
    }
    let n = x.rows;
    if n < folds {
        return Err(BaselineError::TooFewSamples { n, folds });
    }

    // deterministic folds: shuffle indices once, then chunk as evenly as
    // possible (the first n % folds chunks get one extra row)
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, "cv_folds"));
    order.shuffle(&mut rng);
    let base = n / folds;
    let extra = n % folds;
    let mut fold_sets: Vec<Vec<usize>> = Vec::with_capacity(folds);
    let mut start = 0;
    for f in 0..folds {
        let len = base + usize::from(f < extra);
        fold_sets.push(order[start..start + len].to_vec());
        start += len;
    }

    let take_rows = |rows: &[usize], m: &Matrix| -> Matrix {
        Matrix::from_vec(
            rows.len(),
            m.cols,
            rows.iter().flat_map(|&i| m.row(i).iter().copied()).collect(),
        )
    };

    let mut scores = Vec::with_capacity(grid.len());
    let mut best: Option<(usize, f64)> = None;
    for (g, &params) in grid.iter().enumerate() {
        let mut fold_rmse = 0.0;
        for (f, held) in fold_sets.iter().enumerate() {
            let train: Vec<usize> = fold_sets
                .iter()
                .enumerate()
                .filter(|(k, _)| *k != f)
                .flat_map(|(_, s)| s.iter().copied())
                .collect();
            let fit_seed = derive_seed(seed, &format!("cv_grid{g}_fold{f}"));
            let model = fit_baseline(params, &take_rows(&train, x), &take_rows(&train, y), fit_seed)?;
            let pred = predict_baseline(&model, &take_rows(held, x));
            fold_rmse += rmse_cells(&pred, &take_rows(held, y));
        }
        let mean_rmse = fold_rmse / folds as f64;
        scores.push((params, mean_rmse));
        if best.map_or(true, |(_, s)| mean_rmse < s) {
            best = Some((g, mean_rmse));
        }
    }
    let (best_idx, _) = best.unwrap();
    Ok(CvReport {
        best: grid[best_idx],
        scores,
    })
}

/// CSV rendering of a CV table: kind, params (JSON), mean_rmse.
pub fn cv_table_csv(report: &CvReport) -> String {
    let mut out = String::from("kind,params,mean_rmse\n");
    for (params, score) in &report.scores {
        let json = serde_json::to_string(params).unwrap_or_default();
        out.push_str(&format!("{},\"{}\",{}\n", params.kind(), json.replace('"', "\"\""), score));
    }
    out
}
