//! L1-regularized least squares fitted by cyclic coordinate descent with
//! soft-thresholding.
//!
//! Objective: `(1/2n) * ||y - Xw - b||^2 + lambda * ||w||_1`. Features and
//! target are centered internally (no variance scaling), so the
//! full-shrinkage threshold `lambda >= max_j |X_c^T y_c| / n` zeroes every
//! weight exactly and the intercept falls out as `mean(y) - mean(X) . w`.

use thiserror::Error;

use crate::linalg::Matrix;

#[derive(Debug, Error)]
pub enum LassoError {
    #[error("non-finite value in the design matrix or target")]
    NonFinite,
    #[error("need at least 2 samples, got {0}")]
    TooFewSamples(usize),
    #[error("target length {y} does not match {x} rows")]
    ShapeMismatch { x: usize, y: usize },
}

pub type Result<T> = std::result::Result<T, LassoError>;

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct LassoFit {
    pub weights: Vec<f64>,
    pub intercept: f64,
    pub lambda: f64,
    pub sweeps: usize,
}

impl LassoFit {
    pub fn predict_row(&self, x: &[f64]) -> f64 {
        self.intercept + x.iter().zip(&self.weights).map(|(a, w)| a * w).sum::<f64>()
    }
}

fn soft_threshold(rho: f64, lambda: f64) -> f64 {
    if rho > lambda {
        rho - lambda
    } else if rho < -lambda {
        rho + lambda
    } else {
        0.0
    }
}

/// Coordinate descent to stationarity: stops when no coordinate moves more
/// than `tol` in a full sweep (capped at 100k sweeps).
pub fn lasso_fit(x: &Matrix, y: &[f64], lambda: f64, tol: f64) -> Result<LassoFit> {
    let n = x.rows;
    let d = x.cols;
    if n < 2 {
        return Err(LassoError::TooFewSamples(n));
    }
    if y.len() != n {
        return Err(LassoError::ShapeMismatch { x: n, y: y.len() });
    }
    if !x.all_finite() || y.iter().any(|v| !v.is_finite()) {
        return Err(LassoError::NonFinite);
    }

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

    // centered copies; z_j = (1/n) sum_i xc_ij^2
    let mut xc = Matrix::zeros(n, d);
    let mut z = vec![0.0; d];
    for i in 0..n {
        for j in 0..d {
            let v = x.get(i, j) - x_mean[j];
            xc.set(i, j, v);
            z[j] += v * v / nf;
        }
    }
    let yc: Vec<f64> = y.iter().map(|v| v - y_mean).collect();

    let mut w = vec![0.0; d];
    let mut resid = yc.clone(); // r = yc - Xc w
    let mut sweeps = 0usize;
    loop {
        sweeps += 1;
        let mut max_delta = 0.0f64;
        for j in 0..d {
            if z[j] <= 0.0 {
                continue; // constant column: weight stays 0
            }
            // rho_j = (1/n) Xc_j . (r + Xc_j w_j)
            let mut rho = 0.0;
            for i in 0..n {
                rho += xc.get(i, j) * (resid[i] + xc.get(i, j) * w[j]);
            }
            rho /= nf;
            let new = soft_threshold(rho, lambda) / z[j];
            let delta = new - w[j];
            if delta != 0.0 {
                for i in 0..n {
                    resid[i] -= xc.get(i, j) * delta;
                }
                w[j] = new;
            }
            max_delta = max_delta.max(delta.abs());
        }
        if max_delta < tol || sweeps >= 100_000 {
            break;
        }
    }

    let intercept = y_mean - x_mean.iter().zip(&w).map(|(m, wj)| m * wj).sum::<f64>();
    Ok(LassoFit {
        weights: w,
        intercept,
        lambda,
        sweeps,
    })
}

/// Smallest lambda at which every weight is zero: `max_j |X_c^T y_c| / n`.
pub fn full_shrinkage_lambda(x: &Matrix, y: &[f64]) -> f64 {
    let n = x.rows;
    let nf = n as f64;
    let d = x.cols;
    // centering must be bitwise-identical to lasso_fit (sum first, divide
    // once) or the at-threshold fit can leave a last-ulp weight alive
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
    let mut best = 0.0f64;
    for j in 0..d {
        let mut dot = 0.0;
        for i in 0..n {
            dot += (x.get(i, j) - x_mean[j]) * (y[i] - y_mean);
        }
        best = best.max((dot / nf).abs());
    }
    best
}
