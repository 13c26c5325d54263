use ndarray::Array2;
use rand::Rng;
use rand_distr::{Distribution, Uniform};

use super::graph::{Graph, Var};
use super::params::{Mat, ParamId, ParamStore};
use crate::error::{Error, Result};

/// Whether dropout is active and batch normalization uses batch statistics.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Train,
    Eval,
}

fn glorot(rows: usize, cols: usize, rng: &mut impl Rng) -> Mat {
    let limit = (6.0 / (rows + cols) as f64).sqrt();
    let dist = Uniform::new_inclusive(-limit, limit).expect("finite bounds");
    Array2::from_shape_simple_fn((rows, cols), || dist.sample(rng))
}

/// `x W + b` for a batch of row vectors.
pub fn dense(g: &mut Graph, x: Var, weight: Var, bias: Var) -> Result<Var> {
    let xw = g.matmul(x, weight)?;
    g.add_row(xw, bias)
}

#[derive(Debug, Clone, Copy)]
pub struct Dense {
    pub weight: ParamId,
    pub bias: ParamId,
}

impl Dense {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        inputs: usize,
        outputs: usize,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        Ok(Self {
            weight: store.add(&format!("{name}.weight"), glorot(inputs, outputs, rng))?,
            bias: store.add(&format!("{name}.bias"), Mat::zeros((1, outputs)))?,
        })
    }

    pub fn forward(&self, g: &mut Graph, store: &ParamStore, x: Var) -> Result<Var> {
        let w = g.param(store, self.weight);
        let b = g.param(store, self.bias);
        dense(g, x, w, b)
    }
}

/// Gated recurrent cell with input, forget, candidate and output blocks
/// stored side by side (in that order) in one `4 * hidden` wide projection.
#[derive(Debug, Clone, Copy)]
pub struct LstmCell {
    pub w_input: ParamId,
    pub w_hidden: ParamId,
    pub bias: ParamId,
    pub hidden: usize,
}

impl LstmCell {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        inputs: usize,
        hidden: usize,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        let mut bias = Mat::zeros((1, 4 * hidden));
        // forget gate starts open
        bias.slice_mut(ndarray::s![.., hidden..2 * hidden]).fill(1.0);
        Ok(Self {
            w_input: store.add(&format!("{name}.w_input"), glorot(inputs, 4 * hidden, rng))?,
            w_hidden: store.add(&format!("{name}.w_hidden"), glorot(hidden, 4 * hidden, rng))?,
            bias: store.add(&format!("{name}.bias"), bias)?,
            hidden,
        })
    }

    /// One step for a batch; returns the new `(h, c)`.
    pub fn forward(
        &self,
        g: &mut Graph,
        store: &ParamStore,
        x: Var,
        h: Var,
        c: Var,
    ) -> Result<(Var, Var)> {
        let wi = g.param(store, self.w_input);
        let wh = g.param(store, self.w_hidden);
        let b = g.param(store, self.bias);
        lstm_step(g, x, h, c, wi, wh, b, self.hidden)
    }
}

/// The gate arithmetic of [`LstmCell`] over explicit weight nodes.
#[allow(clippy::too_many_arguments)]
pub fn lstm_step(
    g: &mut Graph,
    x: Var,
    h: Var,
    c: Var,
    w_input: Var,
    w_hidden: Var,
    bias: Var,
    hidden: usize,
) -> Result<(Var, Var)> {
    if g.shape(h).1 != hidden || g.shape(c) != g.shape(h) {
        return Err(Error::dim(format!(
            "recurrent state {:?}/{:?} for hidden size {hidden}",
            g.shape(h),
            g.shape(c)
        )));
    }
    let xi = g.matmul(x, w_input)?;
    let hh = g.matmul(h, w_hidden)?;
    let pre = g.add(xi, hh)?;
    let gates = g.add_row(pre, bias)?;
    let i = g.slice_cols(gates, 0, hidden)?;
    let f = g.slice_cols(gates, hidden, 2 * hidden)?;
    let cand = g.slice_cols(gates, 2 * hidden, 3 * hidden)?;
    let o = g.slice_cols(gates, 3 * hidden, 4 * hidden)?;
    let i = g.sigmoid(i);
    let f = g.sigmoid(f);
    let cand = g.tanh(cand);
    let o = g.sigmoid(o);
    let keep = g.mul(f, c)?;
    let write = g.mul(i, cand)?;
    let c_new = g.add(keep, write)?;
    let squashed = g.tanh(c_new);
    let h_new = g.mul(o, squashed)?;
    Ok((h_new, c_new))
}

/// Additive attention: `u[i] = v . tanh(W_e h_i + W_d q)`.
#[derive(Debug, Clone, Copy)]
pub struct Attention {
    pub w_enc: ParamId,
    pub w_dec: ParamId,
    pub v: ParamId,
}

impl Attention {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        enc_dim: usize,
        query_dim: usize,
        attn_dim: usize,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        Ok(Self {
            w_enc: store.add(&format!("{name}.w_enc"), glorot(enc_dim, attn_dim, rng))?,
            w_dec: store.add(&format!("{name}.w_dec"), glorot(query_dim, attn_dim, rng))?,
            v: store.add(&format!("{name}.v"), glorot(attn_dim, 1, rng))?,
        })
    }

    /// Projects encoder outputs once per forward pass: `(B*n) x attn`.
    pub fn project_keys(&self, g: &mut Graph, store: &ParamStore, enc: Var) -> Result<Var> {
        let w = g.param(store, self.w_enc);
        g.matmul(enc, w)
    }

    /// Scores of every item for every query row: `B x n`.
    pub fn scores(
        &self,
        g: &mut Graph,
        store: &ParamStore,
        keys: Var,
        query: Var,
        n: usize,
    ) -> Result<Var> {
        let wd = g.param(store, self.w_dec);
        let v = g.param(store, self.v);
        let q = g.matmul(query, wd)?;
        let joint = g.add_group(keys, q, n)?;
        let act = g.tanh(joint);
        let flat = g.matmul(act, v)?;
        let batch = g.shape(query).0;
        g.reshape(flat, batch, n)
    }
}

/// Dropout: in training, zeroes entries with probability `rate` and rescales
/// survivors by `1 / (1 - rate)`; identity otherwise.
pub fn dropout(g: &mut Graph, x: Var, rate: f64, phase: Phase, rng: &mut impl Rng) -> Result<Var> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::arg(format!("dropout rate {rate} outside [0, 1)")));
    }
    if phase == Phase::Eval || rate == 0.0 {
        return Ok(x);
    }
    let keep = 1.0 / (1.0 - rate);
    let mask = Array2::from_shape_simple_fn(g.shape(x), || {
        if rng.random::<f64>() < rate {
            0.0
        } else {
            keep
        }
    });
    g.mul_const(x, mask)
}

pub const BATCH_NORM_EPS: f64 = 1e-5;
pub const BATCH_NORM_MOMENTUM: f64 = 0.1;

/// Running-statistics update produced by a training-mode batch norm.
#[derive(Debug, Clone)]
pub struct RunningStatsUpdate {
    pub layer: BatchNorm,
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

#[derive(Debug, Clone, Copy)]
pub struct BatchNorm {
    pub gamma: ParamId,
    pub beta: ParamId,
    pub running_mean: ParamId,
    pub running_var: ParamId,
}

impl BatchNorm {
    pub fn new(store: &mut ParamStore, name: &str, dim: usize) -> Result<Self> {
        Ok(Self {
            gamma: store.add(&format!("{name}.gamma"), Mat::ones((1, dim)))?,
            beta: store.add(&format!("{name}.beta"), Mat::zeros((1, dim)))?,
            running_mean: store.add_buffer(&format!("{name}.running_mean"), Mat::zeros((1, dim)))?,
            running_var: store.add_buffer(&format!("{name}.running_var"), Mat::ones((1, dim)))?,
        })
    }

    /// Normalizes with batch statistics in training (recording a running
    /// statistics update) and with the running statistics in evaluation or
    /// when the batch has a single row.
    pub fn forward(
        &self,
        g: &mut Graph,
        store: &ParamStore,
        x: Var,
        phase: Phase,
        updates: &mut Vec<RunningStatsUpdate>,
    ) -> Result<Var> {
        let gamma = g.param(store, self.gamma);
        let beta = g.param(store, self.beta);
        let rows = g.shape(x).0;
        if phase == Phase::Train && rows >= 2 {
            let xv = g.value(x);
            let mean = xv.mean_axis(ndarray::Axis(0)).expect("rows").to_vec();
            let var = xv.var_axis(ndarray::Axis(0), 1.0).to_vec();
            updates.push(RunningStatsUpdate {
                layer: *self,
                mean,
                var,
            });
            return g.batch_norm(x, gamma, beta, BATCH_NORM_EPS);
        }
        let mean = store.value(self.running_mean);
        let var = store.value(self.running_var);
        let scale = var.mapv(|v| 1.0 / (v + BATCH_NORM_EPS).sqrt());
        let shift = -(mean * &scale);
        let dim = g.shape(x);
        let scale_rows = Array2::from_shape_fn(dim, |(_, c)| scale[[0, c]]);
        let shift_rows = Array2::from_shape_fn(dim, |(_, c)| shift[[0, c]]);
        let scaled = g.mul_const(x, scale_rows)?;
        let shift_node = g.constant(shift_rows);
        let normed = g.add(scaled, shift_node)?;
        let gamma_rows = {
            let ones = g.constant(Mat::ones((dim.0, 1)));
            g.matmul(ones, gamma)?
        };
        let out = g.mul(normed, gamma_rows)?;
        g.add_row(out, beta)
    }

    pub fn apply_updates(store: &mut ParamStore, updates: &[RunningStatsUpdate]) -> Result<()> {
        for u in updates {
            let m = BATCH_NORM_MOMENTUM;
            let mean = store.value(u.layer.running_mean).clone();
            let var = store.value(u.layer.running_var).clone();
            let new_mean = Array2::from_shape_fn(mean.dim(), |(_, c)| (1.0 - m) * mean[[0, c]] + m * u.mean[c]);
            let new_var = Array2::from_shape_fn(var.dim(), |(_, c)| (1.0 - m) * var[[0, c]] + m * u.var[c]);
            store.set_value(u.layer.running_mean, new_mean)?;
            store.set_value(u.layer.running_var, new_var)?;
        }
        Ok(())
    }
}
