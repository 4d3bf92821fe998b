//! Graph neural network over yearly mobility graphs.
//!
//! Architecture: linear vertex/edge encoders into a shared hidden width,
//! five pre-activation residual blocks (LayerNorm -> ReLU -> Dropout ->
//! generalized graph convolution -> residual add), and a linear head mapping
//! back to the 15 cultural dimensions.
//!
//! The convolution sends message `ReLU(h_u + h_e) + eps` along each directed
//! edge, aggregates per destination with a per-channel softmax weighted by a
//! learnable temperature, and updates through a two-layer MLP:
//! `update_v = MLP(h_v + agg_v)`.
//!
//! Training follows the sliding-pair protocol: supervised pairs
//! `(graph of year y, dimensions of year y+1)` over consecutive training
//! years, iterated in chronological order every epoch with one Adam step per
//! pair on the full-graph MSE.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autodiff::{adam_step, AdamState, AutodiffError, Tape, TensorId};
use crate::graph::MobilityGraph;
use crate::ingest::SCENE_DIMS;
use crate::linalg::Matrix;
use crate::scenes::SceneTable;
use crate::seeds;

pub const N_BLOCKS: usize = 5;
const PARAMS_PER_BLOCK: usize = 7;
const NUM_PARAMS: usize = 4 + N_BLOCKS * PARAMS_PER_BLOCK + 2;

#[derive(Debug, Error)]
pub enum GnnError {
    #[error("graph vertex/edge widths ({v_got}, {e_got}) do not match model ({v_want}, {e_want})")]
    WidthMismatch {
        v_want: usize,
        e_want: usize,
        v_got: usize,
        e_got: usize,
    },
    #[error("training needs at least two consecutive years of graphs")]
    NotEnoughYears,
    #[error("no cultural-dimension target for FSA {fsa} in {year}")]
    MissingTarget { fsa: String, year: i32 },
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
}

pub type Result<T> = std::result::Result<T, GnnError>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub hidden: usize,
    pub dropout: f64,
    pub lr: f64,
    pub epochs: usize,
    pub msg_eps: f64,
    pub seed: u64,
}

impl TrainConfig {
    pub fn new(seed: u64) -> Self {
        TrainConfig {
            hidden: 64,
            dropout: 0.1,
            lr: 1e-3,
            epochs: 10_000,
            msg_eps: 1e-7,
            seed,
        }
    }
}

/// Column statistics for the census block of vertex features (the cultural
/// dimensions stay on their native [1, 5] scale) plus log scaling for edge
/// weight/count features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureScaler {
    /// full vertex feature width the scaler was fitted on
    pub width: usize,
    /// mean/std per census column (empty when the area block is masked off)
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl FeatureScaler {
    /// Fit on the vertex features of the training graphs.
    pub fn fit(graphs: &[&MobilityGraph]) -> FeatureScaler {
        let width = graphs.first().map_or(SCENE_DIMS, |g| g.vertex_width());
        let extra = width.saturating_sub(SCENE_DIMS);
        let mut mean = vec![0.0; extra];
        let mut count = 0usize;
        for g in graphs {
            for row in &g.vertex_features {
                for (c, m) in mean.iter_mut().enumerate() {
                    *m += row[SCENE_DIMS + c];
                }
                count += 1;
            }
        }
        for m in &mut mean {
            *m /= count.max(1) as f64;
        }
        let mut std = vec![0.0; extra];
        for g in graphs {
            for row in &g.vertex_features {
                for (c, s) in std.iter_mut().enumerate() {
                    let d = row[SCENE_DIMS + c] - mean[c];
                    *s += d * d;
                }
            }
        }
        for s in &mut std {
            *s = (*s / count.max(1) as f64).sqrt();
        }
        FeatureScaler { width, mean, std }
    }

    /// Normalized dense tensors for one graph: z-scored census columns,
    /// log(1 + x) edge features, undirected edges expanded to both
    /// directions.
    pub fn prepare(&self, g: &MobilityGraph) -> GraphTensors {
        let n = g.vertices.len();
        let mut x_v = Matrix::zeros(n, self.width.min(g.vertex_width()));
        for (i, row) in g.vertex_features.iter().enumerate() {
            for c in 0..x_v.cols {
                let v = if c < SCENE_DIMS {
                    row[c]
                } else {
                    let e = c - SCENE_DIMS;
                    if self.std[e] <= 1e-12 {
                        0.0
                    } else {
                        (row[c] - self.mean[e]) / self.std[e]
                    }
                };
                x_v.set(i, c, v);
            }
        }
        let e_width = g.edge_width();
        let mut x_e = Matrix::zeros(2 * g.edges.len(), e_width);
        let mut src = Vec::with_capacity(2 * g.edges.len());
        let mut dst = Vec::with_capacity(2 * g.edges.len());
        for (r, e) in g.edges.iter().enumerate() {
            let mut feat = Vec::with_capacity(e_width);
            feat.push((1.0 + e.weight).ln());
            feat.extend(e.group_counts.iter().map(|c| (1.0 + c).ln()));
            for (dir, (s, d)) in [(e.i, e.j), (e.j, e.i)].into_iter().enumerate() {
                let row = 2 * r + dir;
                x_e.row_mut(row).copy_from_slice(&feat);
                src.push(s);
                dst.push(d);
            }
        }
        GraphTensors { x_v, x_e, src, dst }
    }
}

/// Graph ready for the model: dense features plus directed-edge indexing.
#[derive(Debug, Clone)]
pub struct GraphTensors {
    pub x_v: Matrix,
    pub x_e: Matrix,
    pub src: Vec<usize>,
    pub dst: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GnnModel {
    pub in_v: usize,
    pub in_e: usize,
    pub hidden: usize,
    pub dropout: f64,
    pub msg_eps: f64,
    /// flat parameter list; see the index helpers for layout
    pub params: Vec<Matrix>,
}

// parameter layout indices
const P_VENC_W: usize = 0;
const P_VENC_B: usize = 1;
const P_EENC_W: usize = 2;
const P_EENC_B: usize = 3;
const P_HEAD_W: usize = 4 + N_BLOCKS * PARAMS_PER_BLOCK;
const P_HEAD_B: usize = P_HEAD_W + 1;

const B_LN_GAMMA: usize = 0;
const B_LN_BETA: usize = 1;
const B_TEMP: usize = 2;
const B_MLP_W1: usize = 3;
const B_MLP_B1: usize = 4;
const B_MLP_W2: usize = 5;
const B_MLP_B2: usize = 6;

fn block_base(i: usize) -> usize {
    4 + i * PARAMS_PER_BLOCK
}

fn xavier(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Matrix {
    let bound = (6.0 / (rows + cols) as f64).sqrt();
    Matrix::from_vec(
        rows,
        cols,
        (0..rows * cols).map(|_| rng.gen_range(-bound..bound)).collect(),
    )
}

impl GnnModel {
    pub fn new(in_v: usize, in_e: usize, config: &TrainConfig, rng: &mut ChaCha8Rng) -> GnnModel {
        let h = config.hidden;
        let mut params = Vec::with_capacity(NUM_PARAMS);
        params.push(xavier(rng, in_v, h)); // vertex encoder
        params.push(Matrix::zeros(1, h));
        params.push(xavier(rng, in_e, h)); // edge encoder
        params.push(Matrix::zeros(1, h));
        for _ in 0..N_BLOCKS {
            params.push(Matrix::filled(1, h, 1.0)); // layernorm gamma
            params.push(Matrix::zeros(1, h)); // layernorm beta
            params.push(Matrix::scalar(1.0)); // aggregation temperature
            params.push(xavier(rng, h, 2 * h)); // conv MLP
            params.push(Matrix::zeros(1, 2 * h));
            params.push(xavier(rng, 2 * h, h));
            params.push(Matrix::zeros(1, h));
        }
        params.push(xavier(rng, h, SCENE_DIMS)); // head
        params.push(Matrix::zeros(1, SCENE_DIMS));
        GnnModel {
            in_v,
            in_e,
            hidden: h,
            dropout: config.dropout,
            msg_eps: config.msg_eps,
            params,
        }
    }

    fn check_widths(&self, t: &GraphTensors) -> Result<()> {
        // an edgeless graph leaves the edge width unconstrained
        let e_ok = t.x_e.rows == 0 || t.x_e.cols == self.in_e;
        if t.x_v.cols != self.in_v || !e_ok {
            return Err(GnnError::WidthMismatch {
                v_want: self.in_v,
                e_want: self.in_e,
                v_got: t.x_v.cols,
                e_got: t.x_e.cols,
            });
        }
        Ok(())
    }

    /// Record the full forward pass; returns the tape, the prediction node,
    /// and the parameter nodes in `self.params` order.
    fn forward_tape(
        &self,
        t: &GraphTensors,
        train: bool,
        rng: &mut ChaCha8Rng,
    ) -> Result<(Tape, TensorId, Vec<TensorId>)> {
        self.check_widths(t)?;
        let n = t.x_v.rows;
        let mut tape = Tape::new();
        let ids: Vec<TensorId> = self
            .params
            .iter()
            .map(|p| tape.param(p.clone()))
            .collect::<std::result::Result<_, _>>()?;

        let linear = |tape: &mut Tape, x: TensorId, w: usize, b: usize| -> Result<TensorId> {
            let y = tape.matmul(x, ids[w])?;
            Ok(tape.add_row(y, ids[b])?)
        };

        let x = tape.leaf(t.x_v.clone())?;
        let mut h = linear(&mut tape, x, P_VENC_W, P_VENC_B)?;
        let has_edges = !t.src.is_empty();
        let he = if has_edges {
            let e = tape.leaf(t.x_e.clone())?;
            Some(linear(&mut tape, e, P_EENC_W, P_EENC_B)?)
        } else {
            None
        };

        for blk in 0..N_BLOCKS {
            let base = block_base(blk);
            let z = tape.layernorm(h, ids[base + B_LN_GAMMA], ids[base + B_LN_BETA], 1e-12)?;
            let z = tape.relu(z)?;
            let z = tape.dropout(z, self.dropout, train, rng)?;
            let agg = if let Some(he) = he {
                let hu = tape.gather_rows(z, &t.src)?;
                let sum = tape.add(hu, he)?;
                let msg = tape.relu(sum)?;
                let msg = tape.add_const(msg, self.msg_eps)?;
                tape.segment_softmax(msg, ids[base + B_TEMP], &t.dst, n)?
            } else {
                tape.leaf(Matrix::zeros(n, self.hidden))?
            };
            let zin = tape.add(z, agg)?;
            let u = linear(&mut tape, zin, base + B_MLP_W1, base + B_MLP_B1)?;
            let u = tape.relu(u)?;
            let update = linear(&mut tape, u, base + B_MLP_W2, base + B_MLP_B2)?;
            h = tape.add(h, update)?;
        }

        let pred = linear(&mut tape, h, P_HEAD_W, P_HEAD_B)?;
        Ok((tape, pred, ids))
    }

    /// Eval-mode predictions, `n x 15`.
    pub fn predict_tensors(&self, t: &GraphTensors) -> Result<Matrix> {
        let mut rng = ChaCha8Rng::seed_from_u64(0); // dropout disabled in eval
        let (tape, pred, _) = self.forward_tape(t, false, &mut rng)?;
        Ok(tape.value(pred).clone())
    }

    /// One training forward/backward: returns (mse, gradients per parameter).
    pub fn loss_and_grads(
        &self,
        t: &GraphTensors,
        target: &Matrix,
        rng: &mut ChaCha8Rng,
    ) -> Result<(f64, Vec<Matrix>)> {
        let (mut tape, pred, ids) = self.forward_tape(t, true, rng)?;
        let loss = tape.mse(pred, target)?;
        let loss_val = tape.value(loss).data[0];
        tape.backward(loss)?;
        let grads = ids
            .iter()
            .map(|&id| tape.grad(id).expect("param gradient populated").clone())
            .collect();
        Ok((loss_val, grads))
    }
}

/// One recorded training step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LossPoint {
    pub epoch: usize,
    pub input_year: i32,
    pub mse: f64,
}

/// A trained model with the scaler its inputs must pass through.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainedGnn {
    pub model: GnnModel,
    pub scaler: FeatureScaler,
    pub config: TrainConfig,
    #[serde(skip)]
    pub loss_trace: Vec<LossPoint>,
}

impl TrainedGnn {
    pub fn checkpoint_json(&self) -> String {
        serde_json::to_string(self).expect("checkpoint serializes")
    }

    pub fn from_checkpoint_json(text: &str) -> serde_json::Result<TrainedGnn> {
        serde_json::from_str(text)
    }

    /// CSV with columns epoch, input_year, mse.
    pub fn loss_trace_csv(&self) -> String {
        let mut out = String::from("epoch,input_year,mse\n");
        for p in &self.loss_trace {
            out.push_str(&format!("{},{},{}\n", p.epoch, p.input_year, p.mse));
        }
        out
    }
}

/// The supervision schedule: all `(y, y+1)` with both years present, sorted.
/// Alternate training protocols can reuse this hook to pick different pairs.
pub fn consecutive_pairs(years: &[i32]) -> Vec<(i32, i32)> {
    let mut pairs: Vec<(i32, i32)> = years
        .iter()
        .filter(|y| years.contains(&(*y + 1)))
        .map(|&y| (y, y + 1))
        .collect();
    pairs.sort_unstable();
    pairs
}

/// Target matrix for `year`, rows aligned to `vertices`.
pub fn scene_target_matrix(scenes: &SceneTable, year: i32, vertices: &[String]) -> Result<Matrix> {
    let mut m = Matrix::zeros(vertices.len(), SCENE_DIMS);
    for (i, fsa) in vertices.iter().enumerate() {
        let entry = scenes
            .get(year, fsa)
            .ok_or_else(|| GnnError::MissingTarget {
                fsa: fsa.clone(),
                year,
            })?;
        m.row_mut(i).copy_from_slice(&entry.dims);
    }
    Ok(m)
}

/// Train on scenario-masked graphs for the training years. Every epoch walks
/// the consecutive-year pairs chronologically, one Adam step per pair.
pub fn train(
    graphs: &BTreeMap<i32, MobilityGraph>,
    scenes: &SceneTable,
    config: &TrainConfig,
) -> Result<TrainedGnn> {
    let years: Vec<i32> = graphs.keys().copied().collect();
    let pairs = consecutive_pairs(&years);
    if pairs.is_empty() {
        return Err(GnnError::NotEnoughYears);
    }

    let train_graphs: Vec<&MobilityGraph> = graphs.values().collect();
    let scaler = FeatureScaler::fit(&train_graphs);

    let mut prepared = Vec::with_capacity(pairs.len());
    for &(y, y_next) in &pairs {
        let g = &graphs[&y];
        let tensors = scaler.prepare(g);
        let target = scene_target_matrix(scenes, y_next, &g.vertices)?;
        prepared.push((y, tensors, target));
    }

    let in_v = prepared[0].1.x_v.cols;
    let in_e = prepared[0].1.x_e.cols;
    let mut init_rng = seeds::stream_rng(config.seed, "gnn_init");
    let mut model = GnnModel::new(in_v, in_e, config, &mut init_rng);
    let mut state = AdamState::new(&model.params);
    let mut dropout_rng = seeds::stream_rng(config.seed, "gnn_dropout");

    let mut loss_trace = Vec::with_capacity(config.epochs * prepared.len());
    for epoch in 0..config.epochs {
        for (y, tensors, target) in &prepared {
            let (mse, grads) = model.loss_and_grads(tensors, target, &mut dropout_rng)?;
            adam_step(
                &mut model.params,
                &grads,
                &mut state,
                config.lr,
                0.9,
                0.999,
                1e-8,
            );
            loss_trace.push(LossPoint {
                epoch,
                input_year: *y,
                mse,
            });
        }
    }

    Ok(TrainedGnn {
        model,
        scaler,
        config: config.clone(),
        loss_trace,
    })
}

/// Eval-mode predictions for the year after `graph.year`, rows aligned to
/// `graph.vertices`.
pub fn predict(trained: &TrainedGnn, graph: &MobilityGraph) -> Result<Matrix> {
    let tensors = trained.scaler.prepare(graph);
    trained.model.predict_tensors(&tensors)
}
