//! Layers assembled from graph primitives.

use rand::Rng as _;

use super::graph::{Graph, Var};
use super::init::xavier_uniform;
use super::param::{ParamId, ParamStore};
use super::tensor::Tensor;
use crate::error::Result;
use crate::rng::Rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Tanh,
    Identity,
}

/// `activation(input·weights + bias)`.
pub fn dense(g: &mut Graph<'_>, input: Var, weights: Var, bias: Var, act: Activation) -> Result<Var> {
    let z = g.matmul(input, weights)?;
    let z = g.add_bias(z, bias)?;
    Ok(match act {
        Activation::Tanh => g.tanh(z),
        Activation::Identity => z,
    })
}

/// Parameters of a fully connected layer.
#[derive(Clone, Copy, Debug)]
pub struct Dense {
    pub weights: ParamId,
    pub bias: ParamId,
    pub activation: Activation,
}

impl Dense {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        fan_in: usize,
        fan_out: usize,
        activation: Activation,
        rng: &mut Rng,
    ) -> Self {
        let weights = store.add(format!("{name}.w"), xavier_uniform(fan_in, fan_out, rng));
        let bias = store.add(format!("{name}.b"), Tensor::zeros(vec![fan_out]));
        Dense {
            weights,
            bias,
            activation,
        }
    }

    pub fn forward(&self, g: &mut Graph<'_>, input: Var) -> Result<Var> {
        let (w, b) = (g.param(self.weights), g.param(self.bias));
        dense(g, input, w, b, self.activation)
    }
}

/// Row-wise layer normalization with learned gain and offset.
#[derive(Clone, Copy, Debug)]
pub struct LayerNorm {
    pub gain: ParamId,
    pub offset: ParamId,
    pub eps: f64,
}

/// Variance floor inside the square root.
pub const LAYER_NORM_EPS: f64 = 1e-6;

impl LayerNorm {
    pub fn new(store: &mut ParamStore, name: &str, dim: usize) -> Self {
        let gain = store.add(format!("{name}.gain"), Tensor::filled(vec![dim], 1.0));
        let offset = store.add(format!("{name}.offset"), Tensor::zeros(vec![dim]));
        LayerNorm {
            gain,
            offset,
            eps: LAYER_NORM_EPS,
        }
    }

    pub fn forward(&self, g: &mut Graph<'_>, x: Var) -> Result<Var> {
        let (gain, offset) = (g.param(self.gain), g.param(self.offset));
        g.layer_norm(x, gain, offset, self.eps)
    }
}

/// Standard LSTM cell without peepholes. Gate blocks in the packed weight
/// matrices are ordered input, forget, candidate, output.
#[derive(Clone, Copy, Debug)]
pub struct Lstm {
    pub w_input: ParamId,
    pub w_hidden: ParamId,
    pub bias: ParamId,
    pub units: usize,
}

/// Forget-gate bias at initialization.
pub const FORGET_BIAS: f64 = 1.0;

impl Lstm {
    pub fn new(store: &mut ParamStore, name: &str, input: usize, units: usize, rng: &mut Rng) -> Self {
        let w_input = store.add(format!("{name}.w_input"), xavier_uniform(input, 4 * units, rng));
        let w_hidden = store.add(format!("{name}.w_hidden"), xavier_uniform(units, 4 * units, rng));
        let mut b = vec![0.0; 4 * units];
        b[units..2 * units].fill(FORGET_BIAS);
        let bias = store.add(format!("{name}.b"), Tensor::vector(b));
        Lstm {
            w_input,
            w_hidden,
            bias,
            units,
        }
    }

    /// One time step for a batch of rows: `x [B×d]`, `h_prev, c_prev [B×u]`.
    pub fn step(&self, g: &mut Graph<'_>, x: Var, h_prev: Var, c_prev: Var) -> Result<(Var, Var)> {
        let (wx, wh, b) = (g.param(self.w_input), g.param(self.w_hidden), g.param(self.bias));
        lstm_step(g, x, h_prev, c_prev, wx, wh, b, self.units)
    }
}

/// `c = f⊙c_prev + i⊙g`, `h = o⊙tanh(c)`.
#[allow(clippy::too_many_arguments)]
pub fn lstm_step(
    g: &mut Graph<'_>,
    x: Var,
    h_prev: Var,
    c_prev: Var,
    w_input: Var,
    w_hidden: Var,
    bias: Var,
    units: usize,
) -> Result<(Var, Var)> {
    let zx = g.matmul(x, w_input)?;
    let zh = g.matmul(h_prev, w_hidden)?;
    let z = g.add(zx, zh)?;
    let z = g.add_bias(z, bias)?;
    let u = units;
    let i = g.slice_cols(z, 0, u)?;
    let f = g.slice_cols(z, u, 2 * u)?;
    let c_hat = g.slice_cols(z, 2 * u, 3 * u)?;
    let o = g.slice_cols(z, 3 * u, 4 * u)?;
    let (i, f, c_hat, o) = (g.sigmoid(i), g.sigmoid(f), g.tanh(c_hat), g.sigmoid(o));
    let keep = g.mul(f, c_prev)?;
    let write = g.mul(i, c_hat)?;
    let c = g.add(keep, write)?;
    let tc = g.tanh(c);
    let h = g.mul(o, tc)?;
    Ok((h, c))
}

/// Seeded random matrix with entries uniform in `[-scale, scale]`.
pub fn uniform_matrix(rows: usize, cols: usize, scale: f64, rng: &mut Rng) -> Tensor {
    let data = (0..rows * cols).map(|_| rng.gen_range(-scale..=scale)).collect();
    Tensor::matrix(rows, cols, data).expect("positive extents")
}
