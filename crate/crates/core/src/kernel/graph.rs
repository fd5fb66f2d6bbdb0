//! Tape-based reverse-mode differentiation over dense tensors.
//!
//! A [`Graph`] records every operation applied to its [`Var`]s in
//! execution order. [`Graph::backward`] walks that record in reverse,
//! applying each operation's adjoint rule, and returns the gradients of
//! every node that requires one. A graph lives for exactly one forward and
//! backward pass; dropping it clears the tape.
//!
//! Shapes follow one convention throughout: a tensor is viewed as a matrix
//! whose columns are its last extent and whose rows are everything else.

use std::collections::HashMap;

use super::gemm::{gemm, View};
use super::param::{ParamId, ParamStore};
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Handle of a node recorded on a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

enum Value {
    Owned(Tensor),
    Param(ParamId),
}

enum Op {
    Leaf,
    MatMul(Var, Var),
    AddBias(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Tanh(Var),
    Sigmoid(Var),
    ConcatCols(Vec<Var>),
    SliceCols {
        x: Var,
        start: usize,
    },
    ConcatRows(Vec<Var>),
    SliceRows {
        x: Var,
        start: usize,
    },
    GatherRows {
        x: Var,
        index: Vec<usize>,
    },
    Reshape(Var),
    LayerNorm {
        x: Var,
        gain: Var,
        offset: Var,
        xhat: Vec<f64>,
        inv_std: Vec<f64>,
    },
    Conv1d {
        seq: Var,
        filters: Var,
        bias: Var,
        window: usize,
    },
    MaxPool {
        x: Var,
        argmax: Vec<usize>,
    },
    Softmax {
        x: Var,
        gamma: f64,
    },
    SoftmaxXent {
        logits: Var,
        targets: Vec<usize>,
        probs: Vec<f64>,
    },
    Cosine {
        a: Var,
        b: Var,
        norm_a: Vec<f64>,
        norm_b: Vec<f64>,
    },
    SumSquares(Var),
    Sum(Var),
}

struct Node {
    value: Value,
    op: Op,
    requires_grad: bool,
}

pub struct Graph<'p> {
    store: Option<&'p ParamStore>,
    nodes: Vec<Node>,
    param_nodes: HashMap<ParamId, Var>,
}

impl Default for Graph<'static> {
    fn default() -> Self {
        Graph::new()
    }
}

impl Graph<'static> {
    /// A graph without parameters; only leaves and inputs.
    pub fn new() -> Self {
        Graph {
            store: None,
            nodes: Vec::new(),
            param_nodes: HashMap::new(),
        }
    }
}

fn mat_dims(t: &Tensor) -> (usize, usize) {
    (t.rows(), t.cols())
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Row-wise `softmax(gamma·x)` with max subtraction.
pub(crate) fn softmax_rows(x: &[f64], cols: usize, gamma: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(x.len());
    for row in x.chunks(cols) {
        let m = row.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(gamma * b));
        let start = out.len();
        let mut z = 0.0;
        for &v in row {
            let e = (gamma * v - m).exp();
            z += e;
            out.push(e);
        }
        out[start..].iter_mut().for_each(|e| *e /= z);
    }
    out
}

impl<'p> Graph<'p> {
    pub fn with_params(store: &'p ParamStore) -> Self {
        Graph {
            store: Some(store),
            nodes: Vec::new(),
            param_nodes: HashMap::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op, inputs: &[Var]) -> Var {
        let requires_grad = inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        self.nodes.push(Node {
            value: Value::Owned(value),
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    /// Constant input; gradients are not tracked.
    pub fn input(&mut self, t: Tensor) -> Var {
        self.nodes.push(Node {
            value: Value::Owned(t),
            op: Op::Leaf,
            requires_grad: false,
        });
        Var(self.nodes.len() - 1)
    }

    /// Free variable whose gradient is reported by [`Graph::backward`].
    pub fn leaf(&mut self, t: Tensor) -> Var {
        self.nodes.push(Node {
            value: Value::Owned(t),
            op: Op::Leaf,
            requires_grad: true,
        });
        Var(self.nodes.len() - 1)
    }

    /// Node bound to a stored parameter. Repeated calls return the same node.
    pub fn param(&mut self, id: ParamId) -> Var {
        if let Some(&v) = self.param_nodes.get(&id) {
            return v;
        }
        let store = self.store.expect("graph was created without a parameter store");
        self.nodes.push(Node {
            value: Value::Param(id),
            op: Op::Leaf,
            requires_grad: store.param(id).trainable,
        });
        let v = Var(self.nodes.len() - 1);
        self.param_nodes.insert(id, v);
        v
    }

    pub fn value(&self, v: Var) -> &Tensor {
        match &self.nodes[v.0].value {
            Value::Owned(t) => t,
            Value::Param(id) => self
                .store
                .expect("parameter node without store")
                .get(*id),
        }
    }

    pub fn scalar(&self, v: Var) -> f64 {
        self.value(v).data()[0]
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        let (m, k) = mat_dims(ta);
        if tb.shape().len() != 2 || tb.shape()[0] != k {
            return Err(Error::shape("matmul", ta.shape(), tb.shape()));
        }
        let n = tb.shape()[1];
        let out = gemm(View::new(ta.data(), m, k), View::new(tb.data(), k, n));
        let shape = if ta.shape().len() == 1 {
            vec![n]
        } else {
            vec![m, n]
        };
        let t = Tensor::new(shape, out)?;
        Ok(self.push(t, Op::MatMul(a, b), &[a, b]))
    }

    /// Adds a bias vector to every row.
    pub fn add_bias(&mut self, x: Var, bias: Var) -> Result<Var> {
        let (tx, tb) = (self.value(x), self.value(bias));
        if tb.len() != tx.cols() {
            return Err(Error::shape("add_bias", tx.shape(), tb.shape()));
        }
        let mut out = tx.clone();
        let b = tb.data();
        for row in out.data_mut().chunks_mut(b.len()) {
            row.iter_mut().zip(b).for_each(|(o, bv)| *o += bv);
        }
        Ok(self.push(out, Op::AddBias(x, bias), &[x, bias]))
    }

    fn zip_same(
        &mut self,
        name: &'static str,
        a: Var,
        b: Var,
        f: impl Fn(f64, f64) -> f64,
        op: Op,
    ) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.len() != tb.len() || ta.cols() != tb.cols() {
            return Err(Error::shape(name, ta.shape(), tb.shape()));
        }
        let data = ta.data().iter().zip(tb.data()).map(|(x, y)| f(*x, *y)).collect();
        let t = Tensor::new(ta.shape().to_vec(), data)?;
        Ok(self.push(t, op, &[a, b]))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_same("add", a, b, |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_same("sub", a, b, |x, y| x - y, Op::Sub(a, b))
    }

    /// Elementwise (Hadamard) product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_same("mul", a, b, |x, y| x * y, Op::Mul(a, b))
    }

    fn map(&mut self, x: Var, f: impl Fn(f64) -> f64, op: Op) -> Var {
        let tx = self.value(x);
        let data = tx.data().iter().map(|&v| f(v)).collect();
        let t = Tensor::new(tx.shape().to_vec(), data).expect("same shape");
        self.push(t, op, &[x])
    }

    pub fn scale(&mut self, x: Var, factor: f64) -> Var {
        self.map(x, |v| v * factor, Op::Scale(x, factor))
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        self.map(x, f64::tanh, Op::Tanh(x))
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        self.map(x, sigmoid, Op::Sigmoid(x))
    }

    /// Concatenates along the last axis; all inputs need the same row count.
    pub fn concat_cols(&mut self, xs: &[Var]) -> Result<Var> {
        let first = self.value(xs[0]);
        let rows = first.rows();
        let all_vectors = xs.iter().all(|&v| self.value(v).shape().len() == 1);
        let total: usize = xs.iter().map(|&v| self.value(v).cols()).sum();
        let mut data = vec![0.0; rows * total];
        let mut offset = 0;
        for &v in xs {
            let t = self.value(v);
            if t.rows() != rows {
                return Err(Error::shape("concat_cols", self.value(xs[0]).shape(), t.shape()));
            }
            let c = t.cols();
            for r in 0..rows {
                data[r * total + offset..r * total + offset + c].copy_from_slice(t.row(r));
            }
            offset += c;
        }
        let shape = if all_vectors {
            vec![total]
        } else {
            vec![rows, total]
        };
        let t = Tensor::new(shape, data)?;
        Ok(self.push(t, Op::ConcatCols(xs.to_vec()), xs))
    }

    /// Columns `start..end` of every row.
    pub fn slice_cols(&mut self, x: Var, start: usize, end: usize) -> Result<Var> {
        let tx = self.value(x);
        if start >= end || end > tx.cols() {
            return Err(Error::shape("slice_cols", tx.shape(), &[start, end]));
        }
        let rows = tx.rows();
        let mut data = Vec::with_capacity(rows * (end - start));
        for r in 0..rows {
            data.extend_from_slice(&tx.row(r)[start..end]);
        }
        let mut shape = tx.shape().to_vec();
        *shape.last_mut().unwrap() = end - start;
        let t = Tensor::new(shape, data)?;
        Ok(self.push(t, Op::SliceCols { x, start }, &[x]))
    }

    /// Stacks the rows of all inputs; result is always a matrix.
    pub fn concat_rows(&mut self, xs: &[Var]) -> Result<Var> {
        let cols = self.value(xs[0]).cols();
        let mut data = Vec::new();
        for &v in xs {
            let t = self.value(v);
            if t.cols() != cols {
                return Err(Error::shape("concat_rows", self.value(xs[0]).shape(), t.shape()));
            }
            data.extend_from_slice(t.data());
        }
        let rows = data.len() / cols;
        let t = Tensor::new(vec![rows, cols], data)?;
        Ok(self.push(t, Op::ConcatRows(xs.to_vec()), xs))
    }

    /// Rows `start..end` of the matrix view of `x`.
    pub fn slice_rows(&mut self, x: Var, start: usize, end: usize) -> Result<Var> {
        let tx = self.value(x);
        let (rows, cols) = mat_dims(tx);
        if start >= end || end > rows {
            return Err(Error::shape("slice_rows", tx.shape(), &[start, end]));
        }
        let t = Tensor::new(vec![end - start, cols], tx.data()[start * cols..end * cols].to_vec())?;
        Ok(self.push(t, Op::SliceRows { x, start }, &[x]))
    }

    /// Selects rows by index (repetition allowed); result is a matrix.
    pub fn gather_rows(&mut self, x: Var, index: &[usize]) -> Result<Var> {
        let tx = self.value(x);
        let (rows, cols) = mat_dims(tx);
        let mut data = Vec::with_capacity(index.len() * cols);
        for &i in index {
            if i >= rows {
                return Err(Error::shape("gather_rows", tx.shape(), &[i]));
            }
            data.extend_from_slice(tx.row(i));
        }
        let t = Tensor::new(vec![index.len(), cols], data)?;
        Ok(self.push(
            t,
            Op::GatherRows {
                x,
                index: index.to_vec(),
            },
            &[x],
        ))
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let t = self.value(x).clone().reshape(shape.to_vec())?;
        Ok(self.push(t, Op::Reshape(x), &[x]))
    }

    /// Row-wise layer normalization with population variance.
    pub fn layer_norm(&mut self, x: Var, gain: Var, offset: Var, eps: f64) -> Result<Var> {
        let (tx, tg, to) = (self.value(x), self.value(gain), self.value(offset));
        let n = tx.cols();
        if tg.len() != n || to.len() != n {
            return Err(Error::shape("layer_norm", tx.shape(), tg.shape()));
        }
        let rows = tx.rows();
        let mut xhat = Vec::with_capacity(tx.len());
        let mut inv_std = Vec::with_capacity(rows);
        let mut out = Vec::with_capacity(tx.len());
        for r in 0..rows {
            let row = tx.row(r);
            let mean = row.iter().sum::<f64>() / n as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
            let is = 1.0 / (var + eps).sqrt();
            inv_std.push(is);
            for (j, v) in row.iter().enumerate() {
                let h = (v - mean) * is;
                xhat.push(h);
                out.push(tg.data()[j] * h + to.data()[j]);
            }
        }
        let t = Tensor::new(tx.shape().to_vec(), out)?;
        Ok(self.push(
            t,
            Op::LayerNorm {
                x,
                gain,
                offset,
                xhat,
                inv_std,
            },
            &[x, gain, offset],
        ))
    }

    /// Valid 1-D convolution of `seq [L×d]` with `filters [w×d×F]` plus `bias [F]`.
    pub fn conv1d(&mut self, seq: Var, filters: Var, bias: Var) -> Result<Var> {
        let (ts, tf, tb) = (self.value(seq), self.value(filters), self.value(bias));
        let fs = tf.shape();
        if fs.len() != 3 || ts.shape().len() != 2 || fs[1] != ts.cols() || tb.len() != fs[2] {
            return Err(Error::shape("conv1d", ts.shape(), fs));
        }
        let (len, d) = (ts.rows(), ts.cols());
        let (w, nf) = (fs[0], fs[2]);
        if len < w {
            return Err(Error::SequenceTooShort { len, window: w });
        }
        let steps = len - w + 1;
        // Window t is the contiguous slice seq[t*d .. (t+w)*d], so the
        // unfolded matrix is a strided view with row stride d.
        let windows = View {
            data: ts.data(),
            rows: steps,
            cols: w * d,
            rs: d,
            cs: 1,
        };
        let mut out = gemm(windows, View::new(tf.data(), w * d, nf));
        for row in out.chunks_mut(nf) {
            row.iter_mut().zip(tb.data()).for_each(|(o, b)| *o += b);
        }
        let t = Tensor::new(vec![steps, nf], out)?;
        Ok(self.push(
            t,
            Op::Conv1d {
                seq,
                filters,
                bias,
                window: w,
            },
            &[seq, filters, bias],
        ))
    }

    /// Column-wise maximum over rows (max-over-time pooling).
    pub fn maxpool(&mut self, x: Var) -> Result<Var> {
        let tx = self.value(x);
        let (rows, cols) = mat_dims(tx);
        if rows == 0 {
            return Err(Error::EmptySequence { op: "maxpool" });
        }
        let mut out = tx.row(0).to_vec();
        let mut argmax = vec![0; cols];
        for r in 1..rows {
            for (j, &v) in tx.row(r).iter().enumerate() {
                // strict comparison keeps the earliest maximal position
                if v > out[j] {
                    out[j] = v;
                    argmax[j] = r;
                }
            }
        }
        let t = Tensor::vector(out);
        Ok(self.push(t, Op::MaxPool { x, argmax }, &[x]))
    }

    /// Row-wise `softmax(gamma·x)`.
    pub fn softmax(&mut self, x: Var, gamma: f64) -> Var {
        let tx = self.value(x);
        let out = softmax_rows(tx.data(), tx.cols(), gamma);
        let t = Tensor::new(tx.shape().to_vec(), out).expect("same shape");
        self.push(t, Op::Softmax { x, gamma }, &[x])
    }

    /// Mean over rows of `-log softmax(logits)[target]`.
    pub fn softmax_cross_entropy(&mut self, logits: Var, targets: &[usize]) -> Result<Var> {
        let tl = self.value(logits);
        let (rows, cols) = mat_dims(tl);
        if targets.len() != rows || targets.iter().any(|&t| t >= cols) {
            return Err(Error::shape("softmax_cross_entropy", tl.shape(), &[targets.len()]));
        }
        let probs = softmax_rows(tl.data(), cols, 1.0);
        let mut loss = 0.0;
        for (r, &t) in targets.iter().enumerate() {
            let row = tl.row(r);
            let m = row.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
            let lse = m + row.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
            loss += lse - row[t];
        }
        let t = Tensor::scalar(loss / rows as f64);
        Ok(self.push(
            t,
            Op::SoftmaxXent {
                logits,
                targets: targets.to_vec(),
                probs,
            },
            &[logits],
        ))
    }

    /// Row-wise cosine similarity; a zero-norm row scores 0.
    pub fn cosine_rows(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.len() != tb.len() || ta.cols() != tb.cols() {
            return Err(Error::shape("cosine_rows", ta.shape(), tb.shape()));
        }
        let rows = ta.rows();
        let mut out = Vec::with_capacity(rows);
        let mut norm_a = Vec::with_capacity(rows);
        let mut norm_b = Vec::with_capacity(rows);
        for r in 0..rows {
            let (x, y) = (ta.row(r), tb.row(r));
            let na = x.iter().map(|v| v * v).sum::<f64>().sqrt();
            let nb = y.iter().map(|v| v * v).sum::<f64>().sqrt();
            let dot: f64 = x.iter().zip(y).map(|(p, q)| p * q).sum();
            norm_a.push(na);
            norm_b.push(nb);
            out.push(if na > 0.0 && nb > 0.0 { dot / (na * nb) } else { 0.0 });
        }
        let t = Tensor::vector(out);
        Ok(self.push(
            t,
            Op::Cosine {
                a,
                b,
                norm_a,
                norm_b,
            },
            &[a, b],
        ))
    }

    pub fn sum_squares(&mut self, x: Var) -> Var {
        let s = self.value(x).sum_squares();
        self.push(Tensor::scalar(s), Op::SumSquares(x), &[x])
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.value(x).data().iter().sum();
        self.push(Tensor::scalar(s), Op::Sum(x), &[x])
    }

    /// `lambda · Σ ‖θ‖²` over the given parameters.
    pub fn l2_penalty(&mut self, params: &[ParamId], lambda: f64) -> Result<Option<Var>> {
        let mut total: Option<Var> = None;
        for &id in params {
            let p = self.param(id);
            let s = self.sum_squares(p);
            total = Some(match total {
                None => s,
                Some(t) => self.add(t, s)?,
            });
        }
        Ok(total.map(|t| self.scale(t, lambda)))
    }

    /// Reverse pass from a scalar node.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let tl = self.value(loss);
        if tl.len() != 1 {
            return Err(Error::shape("backward", tl.shape(), &[1]));
        }
        let mut grads: Vec<Option<Vec<f64>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(vec![1.0]);

        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            if !node.requires_grad {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            self.backprop_node(Var(i), &g, &mut grads);
            grads[i] = Some(g);
        }

        let params = self
            .param_nodes
            .iter()
            .map(|(&id, &v)| (id, v.0))
            .collect();
        Ok(Gradients { grads, params })
    }

    fn backprop_node(&self, out: Var, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let node = &self.nodes[out.0];
        let y = self.value(out);
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (ta, tb) = (self.value(*a), self.value(*b));
                let (m, k) = mat_dims(ta);
                let n = tb.shape()[1];
                let gv = View::new(g, m, n);
                if self.needs(*a) {
                    let da = gemm(gv, View::new(tb.data(), k, n).t());
                    self.accumulate(grads, *a, &da);
                }
                if self.needs(*b) {
                    let db = gemm(View::new(ta.data(), m, k).t(), gv);
                    self.accumulate(grads, *b, &db);
                }
            }
            Op::AddBias(x, bias) => {
                self.accumulate(grads, *x, g);
                if self.needs(*bias) {
                    let c = self.value(*bias).len();
                    let mut db = vec![0.0; c];
                    for row in g.chunks(c) {
                        db.iter_mut().zip(row).for_each(|(d, v)| *d += v);
                    }
                    self.accumulate(grads, *bias, &db);
                }
            }
            Op::Add(a, b) => {
                self.accumulate(grads, *a, g);
                self.accumulate(grads, *b, g);
            }
            Op::Sub(a, b) => {
                self.accumulate(grads, *a, g);
                if self.needs(*b) {
                    let neg: Vec<f64> = g.iter().map(|v| -v).collect();
                    self.accumulate(grads, *b, &neg);
                }
            }
            Op::Mul(a, b) => {
                let (ta, tb) = (self.value(*a), self.value(*b));
                if self.needs(*a) {
                    let da: Vec<f64> = g.iter().zip(tb.data()).map(|(g, y)| g * y).collect();
                    self.accumulate(grads, *a, &da);
                }
                if self.needs(*b) {
                    let db: Vec<f64> = g.iter().zip(ta.data()).map(|(g, x)| g * x).collect();
                    self.accumulate(grads, *b, &db);
                }
            }
            Op::Scale(x, f) => {
                let dx: Vec<f64> = g.iter().map(|v| v * f).collect();
                self.accumulate(grads, *x, &dx);
            }
            Op::Tanh(x) => {
                let dx: Vec<f64> = g
                    .iter()
                    .zip(y.data())
                    .map(|(g, t)| g * (1.0 - t * t))
                    .collect();
                self.accumulate(grads, *x, &dx);
            }
            Op::Sigmoid(x) => {
                let dx: Vec<f64> = g
                    .iter()
                    .zip(y.data())
                    .map(|(g, s)| g * s * (1.0 - s))
                    .collect();
                self.accumulate(grads, *x, &dx);
            }
            Op::ConcatCols(xs) => {
                let total = y.cols();
                let rows = y.rows();
                let mut offset = 0;
                for &v in xs {
                    let c = self.value(v).cols();
                    if self.needs(v) {
                        let mut dv = Vec::with_capacity(rows * c);
                        for r in 0..rows {
                            dv.extend_from_slice(&g[r * total + offset..r * total + offset + c]);
                        }
                        self.accumulate(grads, v, &dv);
                    }
                    offset += c;
                }
            }
            Op::SliceCols { x, start } => {
                if self.needs(*x) {
                    let tx = self.value(*x);
                    let (rows, cols) = mat_dims(tx);
                    let width = y.cols();
                    let mut dx = vec![0.0; rows * cols];
                    for r in 0..rows {
                        dx[r * cols + start..r * cols + start + width]
                            .copy_from_slice(&g[r * width..(r + 1) * width]);
                    }
                    self.accumulate(grads, *x, &dx);
                }
            }
            Op::ConcatRows(xs) => {
                let mut offset = 0;
                for &v in xs {
                    let n = self.value(v).len();
                    self.accumulate(grads, v, &g[offset..offset + n]);
                    offset += n;
                }
            }
            Op::SliceRows { x, start } => {
                if self.needs(*x) {
                    let tx = self.value(*x);
                    let cols = tx.cols();
                    let mut dx = vec![0.0; tx.len()];
                    dx[start * cols..start * cols + g.len()].copy_from_slice(g);
                    self.accumulate(grads, *x, &dx);
                }
            }
            Op::GatherRows { x, index } => {
                if self.needs(*x) {
                    let tx = self.value(*x);
                    let cols = tx.cols();
                    let mut dx = vec![0.0; tx.len()];
                    for (k, &i) in index.iter().enumerate() {
                        dx[i * cols..(i + 1) * cols]
                            .iter_mut()
                            .zip(&g[k * cols..(k + 1) * cols])
                            .for_each(|(d, v)| *d += v);
                    }
                    self.accumulate(grads, *x, &dx);
                }
            }
            Op::Reshape(x) => self.accumulate(grads, *x, g),
            Op::LayerNorm {
                x,
                gain,
                offset,
                xhat,
                inv_std,
            } => {
                let n = y.cols();
                let gain_v = self.value(*gain).data();
                if self.needs(*gain) {
                    let mut dg = vec![0.0; n];
                    for (gr, hr) in g.chunks(n).zip(xhat.chunks(n)) {
                        for j in 0..n {
                            dg[j] += gr[j] * hr[j];
                        }
                    }
                    self.accumulate(grads, *gain, &dg);
                }
                if self.needs(*offset) {
                    let mut db = vec![0.0; n];
                    for gr in g.chunks(n) {
                        db.iter_mut().zip(gr).for_each(|(d, v)| *d += v);
                    }
                    self.accumulate(grads, *offset, &db);
                }
                if self.needs(*x) {
                    let mut dx = Vec::with_capacity(g.len());
                    let nf = n as f64;
                    for ((gr, hr), is) in g.chunks(n).zip(xhat.chunks(n)).zip(inv_std) {
                        let dh: Vec<f64> = gr.iter().zip(gain_v).map(|(a, b)| a * b).collect();
                        let sum_dh: f64 = dh.iter().sum();
                        let sum_dh_h: f64 = dh.iter().zip(hr).map(|(a, b)| a * b).sum();
                        for j in 0..n {
                            dx.push(is / nf * (nf * dh[j] - sum_dh - hr[j] * sum_dh_h));
                        }
                    }
                    self.accumulate(grads, *x, &dx);
                }
            }
            Op::Conv1d {
                seq,
                filters,
                bias,
                window,
            } => {
                let (ts, tf) = (self.value(*seq), self.value(*filters));
                let d = ts.cols();
                let nf = tf.shape()[2];
                let steps = y.rows();
                let width = window * d;
                let gv = View::new(g, steps, nf);
                if self.needs(*filters) {
                    let windows = View {
                        data: ts.data(),
                        rows: steps,
                        cols: width,
                        rs: d,
                        cs: 1,
                    };
                    let df = gemm(windows.t(), gv);
                    self.accumulate(grads, *filters, &df);
                }
                if self.needs(*bias) {
                    let mut db = vec![0.0; nf];
                    for row in g.chunks(nf) {
                        db.iter_mut().zip(row).for_each(|(a, b)| *a += b);
                    }
                    self.accumulate(grads, *bias, &db);
                }
                if self.needs(*seq) {
                    let dwin = gemm(gv, View::new(tf.data(), width, nf).t());
                    let mut ds = vec![0.0; ts.len()];
                    for t in 0..steps {
                        ds[t * d..t * d + width]
                            .iter_mut()
                            .zip(&dwin[t * width..(t + 1) * width])
                            .for_each(|(a, b)| *a += b);
                    }
                    self.accumulate(grads, *seq, &ds);
                }
            }
            Op::MaxPool { x, argmax } => {
                if self.needs(*x) {
                    let tx = self.value(*x);
                    let cols = tx.cols();
                    let mut dx = vec![0.0; tx.len()];
                    for (j, &r) in argmax.iter().enumerate() {
                        dx[r * cols + j] += g[j];
                    }
                    self.accumulate(grads, *x, &dx);
                }
            }
            Op::Softmax { x, gamma } => {
                let cols = y.cols();
                let mut dx = Vec::with_capacity(g.len());
                for (gr, pr) in g.chunks(cols).zip(y.data().chunks(cols)) {
                    let dot: f64 = gr.iter().zip(pr).map(|(a, b)| a * b).sum();
                    dx.extend(gr.iter().zip(pr).map(|(gi, pi)| gamma * pi * (gi - dot)));
                }
                self.accumulate(grads, *x, &dx);
            }
            Op::SoftmaxXent {
                logits,
                targets,
                probs,
            } => {
                let cols = self.value(*logits).cols();
                let scale = g[0] / targets.len() as f64;
                let mut dx: Vec<f64> = probs.iter().map(|p| p * scale).collect();
                for (r, &t) in targets.iter().enumerate() {
                    dx[r * cols + t] -= scale;
                }
                self.accumulate(grads, *logits, &dx);
            }
            Op::Cosine {
                a,
                b,
                norm_a,
                norm_b,
            } => {
                let (ta, tb) = (self.value(*a), self.value(*b));
                let cols = ta.cols();
                let (need_a, need_b) = (self.needs(*a), self.needs(*b));
                let mut da = vec![0.0; if need_a { ta.len() } else { 0 }];
                let mut db = vec![0.0; if need_b { tb.len() } else { 0 }];
                for r in 0..y.len() {
                    let (na, nb) = (norm_a[r], norm_b[r]);
                    if na == 0.0 || nb == 0.0 {
                        continue;
                    }
                    let cos = y.data()[r];
                    let (x, z) = (ta.row(r), tb.row(r));
                    let gr = g[r];
                    let inv = 1.0 / (na * nb);
                    if need_a {
                        let c = cos / (na * na);
                        for j in 0..cols {
                            da[r * cols + j] += gr * (z[j] * inv - c * x[j]);
                        }
                    }
                    if need_b {
                        let c = cos / (nb * nb);
                        for j in 0..cols {
                            db[r * cols + j] += gr * (x[j] * inv - c * z[j]);
                        }
                    }
                }
                if need_a {
                    self.accumulate(grads, *a, &da);
                }
                if need_b {
                    self.accumulate(grads, *b, &db);
                }
            }
            Op::SumSquares(x) => {
                let dx: Vec<f64> = self.value(*x).data().iter().map(|v| 2.0 * v * g[0]).collect();
                self.accumulate(grads, *x, &dx);
            }
            Op::Sum(x) => {
                let dx = vec![g[0]; self.value(*x).len()];
                self.accumulate(grads, *x, &dx);
            }
        }
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn accumulate(&self, grads: &mut [Option<Vec<f64>>], v: Var, delta: &[f64]) {
        if !self.needs(v) {
            return;
        }
        match &mut grads[v.0] {
            Some(acc) => acc.iter_mut().zip(delta).for_each(|(a, d)| *a += d),
            slot @ None => *slot = Some(delta.to_vec()),
        }
    }
}

/// Result of [`Graph::backward`].
pub struct Gradients {
    grads: Vec<Option<Vec<f64>>>,
    params: HashMap<ParamId, usize>,
}

impl Gradients {
    /// Gradient with respect to a leaf or intermediate node.
    pub fn wrt(&self, v: Var) -> Option<&[f64]> {
        self.grads[v.0].as_deref()
    }

    /// Gradient with respect to a stored parameter, if it took part in the pass.
    pub fn param(&self, id: ParamId) -> Option<&[f64]> {
        self.params
            .get(&id)
            .and_then(|&i| self.grads[i].as_deref())
    }
}
