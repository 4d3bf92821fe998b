//! Reverse-mode automatic differentiation over dense matrices.
//!
//! A [`Tape`] records the forward pass op by op; [`Tape::backward`] walks the
//! records in reverse and accumulates gradients additively. The op set is
//! exactly what the prediction model needs: add, elementwise mul, matmul,
//! row-broadcast bias, ReLU, row-wise LayerNorm, inverted dropout, row
//! gather/scatter, softmax-weighted segment aggregation, and MSE loss.
//!
//! Everything is `f64`. Graphs here have at most a few dozen vertices, so
//! dense storage and a fresh tape per forward pass are cheap.

use crate::linalg::Matrix;
use rand::Rng;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum AutodiffError {
    #[error("shape mismatch in {op}: {details}")]
    ShapeMismatch { op: &'static str, details: String },
    #[error("non-finite value produced by {op}")]
    NonFinite { op: &'static str },
    #[error("backward requires a scalar loss, got {rows}x{cols}")]
    NonScalarLoss { rows: usize, cols: usize },
    #[error("dropout rate must satisfy 0 <= p < 1, got {0}")]
    BadDropoutRate(f64),
}

pub type Result<T> = std::result::Result<T, AutodiffError>;

/// Handle to a tensor recorded on a tape.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TensorId(usize);

enum Op {
    Leaf,
    Add(usize, usize),
    Mul(usize, usize),
    MatMul(usize, usize),
    /// matrix + row vector, broadcast over rows
    AddRow(usize, usize),
    AddConst(usize),
    Relu(usize),
    LayerNorm {
        x: usize,
        gamma: usize,
        beta: usize,
        /// normalized rows, saved for backward
        xhat: Matrix,
        inv_std: Vec<f64>,
    },
    Dropout {
        x: usize,
        /// 0.0 where dropped, 1/(1-p) where kept
        mask: Vec<f64>,
    },
    GatherRows {
        x: usize,
        idx: Vec<usize>,
    },
    /// Softmax-weighted sum of message rows grouped by destination.
    SegmentSoftmax {
        msgs: usize,
        beta: usize,
        dst: Vec<usize>,
        /// per-message softmax weights, saved for backward
        weights: Matrix,
    },
    Mse {
        pred: usize,
        target: Matrix,
    },
    Sum(usize),
}

struct Node {
    value: Matrix,
    op: Op,
    param: bool,
}

/// Records a forward computation and differentiates it in reverse.
pub struct Tape {
    nodes: Vec<Node>,
    grads: Vec<Option<Matrix>>,
}

impl Tape {
    pub fn new() -> Self {
        Tape {
            nodes: Vec::new(),
            grads: Vec::new(),
        }
    }

    fn push(&mut self, value: Matrix, op: Op, param: bool) -> Result<TensorId> {
        if !value.all_finite() {
            return Err(AutodiffError::NonFinite { op: op_name(&op) });
        }
        self.nodes.push(Node { value, op, param });
        Ok(TensorId(self.nodes.len() - 1))
    }

    /// Record a non-parameter input.
    pub fn leaf(&mut self, value: Matrix) -> Result<TensorId> {
        self.push(value, Op::Leaf, false)
    }

    /// Record a parameter; its gradient is retained by `backward`.
    pub fn param(&mut self, value: Matrix) -> Result<TensorId> {
        self.push(value, Op::Leaf, true)
    }

    pub fn value(&self, id: TensorId) -> &Matrix {
        &self.nodes[id.0].value
    }

    fn shapes(&self, a: TensorId, b: TensorId) -> ((usize, usize), (usize, usize)) {
        (self.nodes[a.0].value.shape(), self.nodes[b.0].value.shape())
    }

    pub fn add(&mut self, a: TensorId, b: TensorId) -> Result<TensorId> {
        let (sa, sb) = self.shapes(a, b);
        if sa != sb {
            return Err(AutodiffError::ShapeMismatch {
                op: "add",
                details: format!("{sa:?} vs {sb:?}"),
            });
        }
        let mut out = self.nodes[a.0].value.clone();
        out.add_assign(&self.nodes[b.0].value);
        self.push(out, Op::Add(a.0, b.0), false)
    }

    pub fn mul(&mut self, a: TensorId, b: TensorId) -> Result<TensorId> {
        let (sa, sb) = self.shapes(a, b);
        if sa != sb {
            return Err(AutodiffError::ShapeMismatch {
                op: "mul",
                details: format!("{sa:?} vs {sb:?}"),
            });
        }
        let va = &self.nodes[a.0].value;
        let vb = &self.nodes[b.0].value;
        let data = va.data.iter().zip(&vb.data).map(|(x, y)| x * y).collect();
        let out = Matrix::from_vec(va.rows, va.cols, data);
        self.push(out, Op::Mul(a.0, b.0), false)
    }

    pub fn matmul(&mut self, a: TensorId, b: TensorId) -> Result<TensorId> {
        let (sa, sb) = self.shapes(a, b);
        if sa.1 != sb.0 {
            return Err(AutodiffError::ShapeMismatch {
                op: "matmul",
                details: format!("{sa:?} * {sb:?}"),
            });
        }
        let out = self.nodes[a.0].value.matmul(&self.nodes[b.0].value);
        self.push(out, Op::MatMul(a.0, b.0), false)
    }

    /// `x + bias` where `bias` is a `1 x cols` row broadcast over the rows of `x`.
    pub fn add_row(&mut self, x: TensorId, bias: TensorId) -> Result<TensorId> {
        let (sx, sb) = self.shapes(x, bias);
        if sb.0 != 1 || sb.1 != sx.1 {
            return Err(AutodiffError::ShapeMismatch {
                op: "add_row",
                details: format!("{sx:?} + {sb:?}"),
            });
        }
        let vx = &self.nodes[x.0].value;
        let vb = &self.nodes[bias.0].value;
        let mut out = vx.clone();
        for r in 0..out.rows {
            for c in 0..out.cols {
                out.data[r * out.cols + c] += vb.data[c];
            }
        }
        self.push(out, Op::AddRow(x.0, bias.0), false)
    }

    /// Add a compile-time constant to every entry (used for the message epsilon).
    pub fn add_const(&mut self, x: TensorId, k: f64) -> Result<TensorId> {
        let out = self.nodes[x.0].value.map(|v| v + k);
        self.push(out, Op::AddConst(x.0), false)
    }

    /// ReLU with subgradient 0 at exactly 0.
    pub fn relu(&mut self, x: TensorId) -> Result<TensorId> {
        let out = self.nodes[x.0].value.map(|v| if v > 0.0 { v } else { 0.0 });
        self.push(out, Op::Relu(x.0), false)
    }

    /// Row-wise layer normalization with affine scale/shift.
    ///
    /// Rows are normalized to mean 0 and (population) variance 1, then scaled
    /// by `gamma` and shifted by `beta`, both `1 x cols`.
    pub fn layernorm(
        &mut self,
        x: TensorId,
        gamma: TensorId,
        beta: TensorId,
        eps: f64,
    ) -> Result<TensorId> {
        let sx = self.nodes[x.0].value.shape();
        for (name, t) in [("gamma", gamma), ("beta", beta)] {
            let st = self.nodes[t.0].value.shape();
            if st != (1, sx.1) {
                return Err(AutodiffError::ShapeMismatch {
                    op: "layernorm",
                    details: format!("{name} is {st:?}, expected (1, {})", sx.1),
                });
            }
        }
        let vx = &self.nodes[x.0].value;
        let vg = &self.nodes[gamma.0].value;
        let vb = &self.nodes[beta.0].value;
        let (n, c) = vx.shape();
        let mut xhat = Matrix::zeros(n, c);
        let mut inv_std = vec![0.0; n];
        let mut out = Matrix::zeros(n, c);
        for r in 0..n {
            let row = vx.row(r);
            let mean = row.iter().sum::<f64>() / c as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / c as f64;
            let istd = 1.0 / (var + eps).sqrt();
            inv_std[r] = istd;
            for j in 0..c {
                let h = (row[j] - mean) * istd;
                xhat.data[r * c + j] = h;
                out.data[r * c + j] = h * vg.data[j] + vb.data[j];
            }
        }
        self.push(
            out,
            Op::LayerNorm {
                x: x.0,
                gamma: gamma.0,
                beta: beta.0,
                xhat,
                inv_std,
            },
            false,
        )
    }

    /// Inverted dropout: identity when `train` is false, otherwise each entry
    /// is kept with probability `1-p` and scaled by `1/(1-p)`.
    pub fn dropout(
        &mut self,
        x: TensorId,
        p: f64,
        train: bool,
        rng: &mut impl Rng,
    ) -> Result<TensorId> {
        if !(0.0..1.0).contains(&p) {
            return Err(AutodiffError::BadDropoutRate(p));
        }
        if !train || p == 0.0 {
            // identity; no mask to record
            let out = self.nodes[x.0].value.clone();
            return self.push(
                out,
                Op::Dropout {
                    x: x.0,
                    mask: Vec::new(),
                },
                false,
            );
        }
        let vx = &self.nodes[x.0].value;
        let scale = 1.0 / (1.0 - p);
        let mask: Vec<f64> = (0..vx.len())
            .map(|_| if rng.gen::<f64>() < p { 0.0 } else { scale })
            .collect();
        let data = vx.data.iter().zip(&mask).map(|(v, m)| v * m).collect();
        let out = Matrix::from_vec(vx.rows, vx.cols, data);
        self.push(out, Op::Dropout { x: x.0, mask }, false)
    }

    /// Select rows of `x` by index, duplicates allowed.
    pub fn gather_rows(&mut self, x: TensorId, idx: &[usize]) -> Result<TensorId> {
        let vx = &self.nodes[x.0].value;
        let mut out = Matrix::zeros(idx.len(), vx.cols);
        for (i, &r) in idx.iter().enumerate() {
            out.row_mut(i).copy_from_slice(vx.row(r));
        }
        self.push(
            out,
            Op::GatherRows {
                x: x.0,
                idx: idx.to_vec(),
            },
            false,
        )
    }

    /// Per-channel softmax-weighted sum of message rows grouped by destination.
    ///
    /// For destination `v` and channel `c`, the weight of message `i` (with
    /// `dst[i] == v`) is `softmax_i(beta * msgs[i][c])`, and the output is the
    /// weighted sum of the `msgs[i][c]`. Destinations with no incoming message
    /// get a zero row. `beta` is a learnable `1x1` temperature.
    pub fn segment_softmax(
        &mut self,
        msgs: TensorId,
        beta: TensorId,
        dst: &[usize],
        n_out: usize,
    ) -> Result<TensorId> {
        let vm = &self.nodes[msgs.0].value;
        if vm.rows != dst.len() {
            return Err(AutodiffError::ShapeMismatch {
                op: "segment_softmax",
                details: format!("{} messages vs {} destinations", vm.rows, dst.len()),
            });
        }
        if self.nodes[beta.0].value.shape() != (1, 1) {
            return Err(AutodiffError::ShapeMismatch {
                op: "segment_softmax",
                details: "beta must be 1x1".to_string(),
            });
        }
        let b = self.nodes[beta.0].value.data[0];
        let cols = vm.cols;
        let mut segments: Vec<Vec<usize>> = vec![Vec::new(); n_out];
        for (i, &d) in dst.iter().enumerate() {
            segments[d].push(i);
        }
        let mut weights = Matrix::zeros(vm.rows, cols);
        let mut out = Matrix::zeros(n_out, cols);
        for (v, seg) in segments.iter().enumerate() {
            if seg.is_empty() {
                continue;
            }
            for c in 0..cols {
                let mut mx = f64::NEG_INFINITY;
                for &i in seg {
                    mx = mx.max(b * vm.get(i, c));
                }
                let mut z = 0.0;
                for &i in seg {
                    let e = (b * vm.get(i, c) - mx).exp();
                    weights.set(i, c, e);
                    z += e;
                }
                let mut acc = 0.0;
                for &i in seg {
                    let w = weights.get(i, c) / z;
                    weights.set(i, c, w);
                    acc += w * vm.get(i, c);
                }
                out.set(v, c, acc);
            }
        }
        self.push(
            out,
            Op::SegmentSoftmax {
                msgs: msgs.0,
                beta: beta.0,
                dst: dst.to_vec(),
                weights,
            },
            false,
        )
    }

    /// Mean squared error over all cells, as a `1x1` tensor.
    pub fn mse(&mut self, pred: TensorId, target: &Matrix) -> Result<TensorId> {
        let vp = &self.nodes[pred.0].value;
        if vp.shape() != target.shape() {
            return Err(AutodiffError::ShapeMismatch {
                op: "mse",
                details: format!("{:?} vs {:?}", vp.shape(), target.shape()),
            });
        }
        let n = vp.len() as f64;
        let sum: f64 = vp
            .data
            .iter()
            .zip(&target.data)
            .map(|(p, t)| (p - t) * (p - t))
            .sum();
        self.push(
            Matrix::scalar(sum / n),
            Op::Mse {
                pred: pred.0,
                target: target.clone(),
            },
            false,
        )
    }

    /// Sum of all entries, as a `1x1` tensor.
    pub fn sum(&mut self, x: TensorId) -> Result<TensorId> {
        let s: f64 = self.nodes[x.0].value.data.iter().sum();
        self.push(Matrix::scalar(s), Op::Sum(x.0), false)
    }

    /// Propagate gradients of a scalar loss back to every parameter.
    ///
    /// Gradients of non-parameter intermediates are freed as soon as they have
    /// been consumed. Parameters the loss does not depend on end up with zero
    /// gradients.
    pub fn backward(&mut self, loss: TensorId) -> Result<()> {
        let vl = &self.nodes[loss.0].value;
        if vl.shape() != (1, 1) {
            return Err(AutodiffError::NonScalarLoss {
                rows: vl.rows,
                cols: vl.cols,
            });
        }
        self.grads = (0..self.nodes.len()).map(|_| None).collect();
        self.grads[loss.0] = Some(Matrix::scalar(1.0));

        for i in (0..=loss.0).rev() {
            let Some(g) = self.grads[i].take() else {
                continue;
            };
            self.propagate(i, &g);
            if self.nodes[i].param {
                self.grads[i] = Some(g);
            }
        }
        // parameters untouched by the loss get explicit zeros
        for i in 0..self.nodes.len() {
            if self.nodes[i].param && self.grads[i].is_none() {
                let (r, c) = self.nodes[i].value.shape();
                self.grads[i] = Some(Matrix::zeros(r, c));
            }
        }
        Ok(())
    }

    /// Gradient of the last `backward` loss w.r.t. a parameter.
    pub fn grad(&self, id: TensorId) -> Option<&Matrix> {
        self.grads.get(id.0).and_then(|g| g.as_ref())
    }

    fn accum(&mut self, node: usize, delta: Matrix) {
        match &mut self.grads[node] {
            Some(g) => g.add_assign(&delta),
            slot @ None => *slot = Some(delta),
        }
    }

    fn propagate(&mut self, i: usize, g: &Matrix) {
        // split borrows: clone out what backward rules need
        match &self.nodes[i].op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                let (a, b) = (*a, *b);
                self.accum(a, g.clone());
                self.accum(b, g.clone());
            }
            Op::Mul(a, b) => {
                let (a, b) = (*a, *b);
                let va = self.nodes[a].value.clone();
                let vb = self.nodes[b].value.clone();
                let da = Matrix::from_vec(
                    g.rows,
                    g.cols,
                    g.data.iter().zip(&vb.data).map(|(x, y)| x * y).collect(),
                );
                let db = Matrix::from_vec(
                    g.rows,
                    g.cols,
                    g.data.iter().zip(&va.data).map(|(x, y)| x * y).collect(),
                );
                self.accum(a, da);
                self.accum(b, db);
            }
            Op::MatMul(a, b) => {
                let (a, b) = (*a, *b);
                let da = g.matmul(&self.nodes[b].value.transpose());
                let db = self.nodes[a].value.transpose().matmul(g);
                self.accum(a, da);
                self.accum(b, db);
            }
            Op::AddRow(x, bias) => {
                let (x, bias) = (*x, *bias);
                let mut db = Matrix::zeros(1, g.cols);
                for r in 0..g.rows {
                    for c in 0..g.cols {
                        db.data[c] += g.get(r, c);
                    }
                }
                self.accum(x, g.clone());
                self.accum(bias, db);
            }
            Op::AddConst(x) => {
                let x = *x;
                self.accum(x, g.clone());
            }
            Op::Relu(x) => {
                let x = *x;
                let vx = &self.nodes[x].value;
                let data = g
                    .data
                    .iter()
                    .zip(&vx.data)
                    .map(|(gv, xv)| if *xv > 0.0 { *gv } else { 0.0 })
                    .collect();
                let dx = Matrix::from_vec(g.rows, g.cols, data);
                self.accum(x, dx);
            }
            Op::LayerNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
            } => {
                let (x, gamma, beta) = (*x, *gamma, *beta);
                let xhat = xhat.clone();
                let inv_std = inv_std.clone();
                let vg = self.nodes[gamma].value.clone();
                let (n, c) = g.shape();
                let cf = c as f64;

                let mut dgamma = Matrix::zeros(1, c);
                let mut dbeta = Matrix::zeros(1, c);
                let mut dx = Matrix::zeros(n, c);
                for r in 0..n {
                    let mut sum_dxh = 0.0;
                    let mut sum_dxh_xh = 0.0;
                    // dxhat = g * gamma
                    let mut dxh = vec![0.0; c];
                    for j in 0..c {
                        let gv = g.get(r, j);
                        let xh = xhat.get(r, j);
                        dgamma.data[j] += gv * xh;
                        dbeta.data[j] += gv;
                        let d = gv * vg.data[j];
                        dxh[j] = d;
                        sum_dxh += d;
                        sum_dxh_xh += d * xh;
                    }
                    for j in 0..c {
                        let xh = xhat.get(r, j);
                        dx.set(
                            r,
                            j,
                            inv_std[r] / cf * (cf * dxh[j] - sum_dxh - xh * sum_dxh_xh),
                        );
                    }
                }
                self.accum(x, dx);
                self.accum(gamma, dgamma);
                self.accum(beta, dbeta);
            }
            Op::Dropout { x, mask } => {
                let x = *x;
                let dx = if mask.is_empty() {
                    g.clone()
                } else {
                    Matrix::from_vec(
                        g.rows,
                        g.cols,
                        g.data.iter().zip(mask).map(|(gv, m)| gv * m).collect(),
                    )
                };
                self.accum(x, dx);
            }
            Op::GatherRows { x, idx } => {
                let x = *x;
                let idx = idx.clone();
                let (r, c) = self.nodes[x].value.shape();
                let mut dx = Matrix::zeros(r, c);
                for (i, &src) in idx.iter().enumerate() {
                    for j in 0..c {
                        dx.data[src * c + j] += g.get(i, j);
                    }
                }
                self.accum(x, dx);
            }
            Op::SegmentSoftmax {
                msgs,
                beta,
                dst,
                weights,
            } => {
                let (msgs, beta) = (*msgs, *beta);
                let dst = dst.clone();
                let weights = weights.clone();
                let vm = self.nodes[msgs].value.clone();
                let b = self.nodes[beta].value.data[0];
                let cols = vm.cols;

                let n_out = g.rows;
                let mut segments: Vec<Vec<usize>> = vec![Vec::new(); n_out];
                for (i, &d) in dst.iter().enumerate() {
                    segments[d].push(i);
                }
                let mut dmsgs = Matrix::zeros(vm.rows, cols);
                let mut dbeta = 0.0;
                for (v, seg) in segments.iter().enumerate() {
                    if seg.is_empty() {
                        continue;
                    }
                    for c in 0..cols {
                        let gv = g.get(v, c);
                        if gv == 0.0 {
                            continue;
                        }
                        // agg = sum_i w_i m_i over the segment
                        let mut agg = 0.0;
                        for &i in seg {
                            agg += weights.get(i, c) * vm.get(i, c);
                        }
                        for &i in seg {
                            let w = weights.get(i, c);
                            let m = vm.get(i, c);
                            // d agg / d m_i = w_i * (1 + beta * (m_i - agg))
                            dmsgs.data[i * cols + c] += gv * w * (1.0 + b * (m - agg));
                            // d agg / d beta accumulates w_i * m_i * (m_i - agg)
                            dbeta += gv * w * m * (m - agg);
                        }
                    }
                }
                self.accum(msgs, dmsgs);
                self.accum(beta, Matrix::scalar(dbeta));
            }
            Op::Mse { pred, target } => {
                let pred = *pred;
                let target = target.clone();
                let vp = &self.nodes[pred].value;
                let n = vp.len() as f64;
                let scale = 2.0 / n * g.data[0];
                let data = vp
                    .data
                    .iter()
                    .zip(&target.data)
                    .map(|(p, t)| scale * (p - t))
                    .collect();
                let dp = Matrix::from_vec(vp.rows, vp.cols, data);
                self.accum(pred, dp);
            }
            Op::Sum(x) => {
                let x = *x;
                let (r, c) = self.nodes[x].value.shape();
                self.accum(x, Matrix::filled(r, c, g.data[0]));
            }
        }
    }
}

impl Default for Tape {
    fn default() -> Self {
        Tape::new()
    }
}

fn op_name(op: &Op) -> &'static str {
    match op {
        Op::Leaf => "leaf",
        Op::Add(..) => "add",
        Op::Mul(..) => "mul",
        Op::MatMul(..) => "matmul",
        Op::AddRow(..) => "add_row",
        Op::AddConst(..) => "add_const",
        Op::Relu(..) => "relu",
        Op::LayerNorm { .. } => "layernorm",
        Op::Dropout { .. } => "dropout",
        Op::GatherRows { .. } => "gather_rows",
        Op::SegmentSoftmax { .. } => "segment_softmax",
        Op::Mse { .. } => "mse",
        Op::Sum(..) => "sum",
    }
}

/// Optimizer state for [`adam_step`]: first/second moment estimates plus the
/// shared step counter.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct AdamState {
    m: Vec<Matrix>,
    v: Vec<Matrix>,
    t: u64,
}

impl AdamState {
    pub fn new(params: &[Matrix]) -> Self {
        AdamState {
            m: params.iter().map(|p| Matrix::zeros(p.rows, p.cols)).collect(),
            v: params.iter().map(|p| Matrix::zeros(p.rows, p.cols)).collect(),
            t: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.t
    }
}

/// One Adam update, applied in place.
pub fn adam_step(
    params: &mut [Matrix],
    grads: &[Matrix],
    state: &mut AdamState,
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
) {
    assert_eq!(params.len(), grads.len(), "params/grads length mismatch");
    assert_eq!(params.len(), state.m.len(), "state built for different params");
    state.t += 1;
    let t = state.t as f64;
    let bc1 = 1.0 - beta1.powf(t);
    let bc2 = 1.0 - beta2.powf(t);
    for ((p, g), (m, v)) in params
        .iter_mut()
        .zip(grads)
        .zip(state.m.iter_mut().zip(state.v.iter_mut()))
    {
        assert_eq!(p.shape(), g.shape(), "param/grad shape mismatch");
        for i in 0..p.data.len() {
            m.data[i] = beta1 * m.data[i] + (1.0 - beta1) * g.data[i];
            v.data[i] = beta2 * v.data[i] + (1.0 - beta2) * g.data[i] * g.data[i];
            let mhat = m.data[i] / bc1;
            let vhat = v.data[i] / bc2;
            p.data[i] -= lr * mhat / (vhat.sqrt() + eps);
        }
    }
}
