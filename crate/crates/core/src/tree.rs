//! Regression trees and the two ensembles built on them.
//!
//! Trees are grown greedily on variance reduction: each split minimizes the
//! summed squared error of the two children, with candidate thresholds at
//! midpoints between consecutive distinct feature values. The forest draws a
//! bootstrap sample per tree and considers a random `sqrt(d)` feature subset
//! at every split; boosting fits shallow trees to residuals with a shrinkage
//! factor.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::linalg::Matrix;

#[derive(Debug, Error)]
pub enum TreeError {
    #[error("need at least 1 sample")]
    Empty,
    #[error("target length {y} does not match {x} rows")]
    ShapeMismatch { x: usize, y: usize },
    #[error("non-finite value in the design matrix or target")]
    NonFinite,
}

pub type Result<T> = std::result::Result<T, TreeError>;

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub enum Node {
    Leaf {
        value: f64,
    },
    Split {
        feature: usize,
        threshold: f64,
        left: Box<Node>,
        right: Box<Node>,
    },
}

impl Node {
    pub fn predict_row(&self, x: &[f64]) -> f64 {
        match self {
            Node::Leaf { value } => *value,
            Node::Split {
                feature,
                threshold,
                left,
                right,
            } => {
                if x[*feature] <= *threshold {
                    left.predict_row(x)
                } else {
                    right.predict_row(x)
                }
            }
        }
    }

    pub fn depth(&self) -> usize {
        match self {
            Node::Leaf { .. } => 0,
            Node::Split { left, right, .. } => 1 + left.depth().max(right.depth()),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct TreeConfig {
    /// `None` grows until leaves are pure or below `min_leaf`.
    pub max_depth: Option<usize>,
    /// Minimum samples in each child of a split.
    pub min_leaf: usize,
    /// Features considered per split; `None` means all.
    pub feature_subsample: Option<usize>,
}

impl Default for TreeConfig {
    fn default() -> Self {
        TreeConfig {
            max_depth: None,
            min_leaf: 1,
            feature_subsample: None,
        }
    }
}

fn mean(vals: impl Iterator<Item = f64>) -> f64 {
    let mut sum = 0.0;
    let mut n = 0usize;
    for v in vals {
        sum += v;
        n += 1;
    }
    sum / n.max(1) as f64
}

struct Grower<'a> {
    x: &'a Matrix,
    y: &'a [f64],
    config: TreeConfig,
}

struct BestSplit {
    feature: usize,
    threshold: f64,
    score: f64, // summed SSE of children; lower is better
}

impl<'a> Grower<'a> {
    /// Best split on one feature over the index set, or None if no split
    /// satisfies `min_leaf`. `order` is `idx` sorted by the feature value.
    fn best_on_feature(&self, idx: &[usize], feature: usize) -> Option<BestSplit> {
        let mut order: Vec<usize> = idx.to_vec();
        order.sort_by(|&a, &b| {
            self.x
                .get(a, feature)
                .partial_cmp(&self.x.get(b, feature))
                .unwrap()
        });
        let n = order.len();
        let total_sum: f64 = order.iter().map(|&i| self.y[i]).sum();
        let total_sq: f64 = order.iter().map(|&i| self.y[i] * self.y[i]).sum();

        let mut left_sum = 0.0;
        let mut left_sq = 0.0;
        let mut best: Option<BestSplit> = None;
        for pos in 0..n - 1 {
            let i = order[pos];
            left_sum += self.y[i];
            left_sq += self.y[i] * self.y[i];
            let nl = pos + 1;
            let nr = n - nl;
            if nl < self.config.min_leaf || nr < self.config.min_leaf {
                continue;
            }
            let here = self.x.get(i, feature);
            let next = self.x.get(order[pos + 1], feature);
            if here == next {
                continue; // can't separate equal values
            }
            let right_sum = total_sum - left_sum;
            let right_sq = total_sq - left_sq;
            let sse = (left_sq - left_sum * left_sum / nl as f64)
                + (right_sq - right_sum * right_sum / nr as f64);
            if best.as_ref().map_or(true, |b| sse < b.score - 1e-15) {
                best = Some(BestSplit {
                    feature,
                    threshold: 0.5 * (here + next),
                    score: sse,
                });
            }
        }
        best
    }

    fn grow(&self, idx: &[usize], depth: usize, rng: &mut ChaCha8Rng) -> Node {
        let node_mean = mean(idx.iter().map(|&i| self.y[i]));
        let pure = idx
            .iter()
            .all(|&i| (self.y[i] - self.y[idx[0]]).abs() < 1e-15);
        let depth_ok = self.config.max_depth.map_or(true, |d| depth < d);
        if idx.len() < 2 * self.config.min_leaf || idx.len() < 2 || pure || !depth_ok {
            return Node::Leaf { value: node_mean };
        }

        let d = self.x.cols;
        let features: Vec<usize> = match self.config.feature_subsample {
            Some(m) if m < d => {
                let mut all: Vec<usize> = (0..d).collect();
                all.shuffle(rng);
                let mut chosen: Vec<usize> = all.into_iter().take(m).collect();
                chosen.sort_unstable();
                chosen
            }
            _ => (0..d).collect(),
        };

        let mut best: Option<BestSplit> = None;
        for f in features {
            if let Some(cand) = self.best_on_feature(idx, f) {
                if best.as_ref().map_or(true, |b| cand.score < b.score - 1e-15) {
                    best = Some(cand);
                }
            }
        }
        let Some(split) = best else {
            return Node::Leaf { value: node_mean };
        };

        let (left_idx, right_idx): (Vec<usize>, Vec<usize>) = idx
            .iter()
            .partition(|&&i| self.x.get(i, split.feature) <= split.threshold);
        Node::Split {
            feature: split.feature,
            threshold: split.threshold,
            left: Box::new(self.grow(&left_idx, depth + 1, rng)),
            right: Box::new(self.grow(&right_idx, depth + 1, rng)),
        }
    }
}

fn validate(x: &Matrix, y: &[f64]) -> Result<()> {
    if x.rows == 0 {
        return Err(TreeError::Empty);
    }
    if y.len() != x.rows {
        return Err(TreeError::ShapeMismatch { x: x.rows, y: y.len() });
    }
    if !x.all_finite() || y.iter().any(|v| !v.is_finite()) {
        return Err(TreeError::NonFinite);
    }
    Ok(())
}

pub fn fit_tree(x: &Matrix, y: &[f64], config: TreeConfig, rng: &mut ChaCha8Rng) -> Result<Node> {
    validate(x, y)?;
    let idx: Vec<usize> = (0..x.rows).collect();
    let grower = Grower { x, y, config };
    Ok(grower.grow(&idx, 0, rng))
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Forest {
    pub trees: Vec<Node>,
}

impl Forest {
    pub fn predict_row(&self, x: &[f64]) -> f64 {
        mean(self.trees.iter().map(|t| t.predict_row(x)))
    }
}

/// Bagged trees: bootstrap resample per tree plus `sqrt(d)` feature
/// subsampling at every split.
pub fn fit_forest(
    x: &Matrix,
    y: &[f64],
    n_trees: usize,
    max_depth: Option<usize>,
    min_leaf: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Forest> {
    validate(x, y)?;
    let n = x.rows;
    let m = (x.cols as f64).sqrt().round().max(1.0) as usize;
    let config = TreeConfig {
        max_depth,
        min_leaf,
        feature_subsample: Some(m),
    };
    let mut trees = Vec::with_capacity(n_trees);
    for _ in 0..n_trees {
        let sample: Vec<usize> = (0..n).map(|_| rng.gen_range(0..n)).collect();
        let xb = Matrix::from_vec(
            n,
            x.cols,
            sample
                .iter()
                .flat_map(|&i| x.row(i).iter().copied())
                .collect(),
        );
        let yb: Vec<f64> = sample.iter().map(|&i| y[i]).collect();
        let grower = Grower {
            x: &xb,
            y: &yb,
            config,
        };
        let idx: Vec<usize> = (0..n).collect();
        trees.push(grower.grow(&idx, 0, rng));
    }
    Ok(Forest { trees })
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Boosted {
    pub base: f64,
    pub shrinkage: f64,
    pub trees: Vec<Node>,
}

impl Boosted {
    pub fn predict_row(&self, x: &[f64]) -> f64 {
        self.base
            + self.shrinkage
                * self
                    .trees
                    .iter()
                    .map(|t| t.predict_row(x))
                    .sum::<f64>()
    }
}

/// Squared-error gradient boosting: start from the target mean and fit each
/// round's depth-3 tree to the current residuals.
pub fn fit_boosted(
    x: &Matrix,
    y: &[f64],
    rounds: usize,
    shrinkage: f64,
    rng: &mut ChaCha8Rng,
) -> Result<Boosted> {
    validate(x, y)?;
    let base = mean(y.iter().copied());
    let config = TreeConfig {
        max_depth: Some(3),
        min_leaf: 1,
        feature_subsample: None,
    };
    let mut pred: Vec<f64> = vec![base; x.rows];
    let mut trees = Vec::with_capacity(rounds);
    let idx: Vec<usize> = (0..x.rows).collect();
    for _ in 0..rounds {
        let resid: Vec<f64> = y.iter().zip(&pred).map(|(t, p)| t - p).collect();
        let grower = Grower {
            x,
            y: &resid,
            config,
        };
        let tree = grower.grow(&idx, 0, rng);
        for (i, p) in pred.iter_mut().enumerate() {
            *p += shrinkage * tree.predict_row(x.row(i));
        }
        trees.push(tree);
    }
    Ok(Boosted {
        base,
        shrinkage,
        trees,
    })
}
