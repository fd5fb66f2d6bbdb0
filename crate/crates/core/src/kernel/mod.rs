//! Minimal dense-tensor engine: reverse-mode differentiation, the layers
//! used by the content and session models, Xavier initialization, Adam,
//! finite-difference gradient checking and a checkpoint container.

mod adam;
mod checkpoint;
mod gemm;
mod gradcheck;
mod graph;
mod init;
mod layers;
mod param;
mod tensor;

pub use adam::{Adam, AdamConfig};
pub use checkpoint::{Checkpoint, Entry};
pub use gradcheck::{gradient_check, gradient_check_params};
pub use graph::{Gradients, Graph, Var};
pub use init::{xavier_bound, xavier_uniform};
pub use layers::{dense, lstm_step, uniform_matrix, Activation, Dense, LayerNorm, Lstm, FORGET_BIAS, LAYER_NORM_EPS};
pub use param::{ParamId, ParamStore, Parameter};
pub use tensor::Tensor;

/// `softmax(gamma·x)` of a single vector, computed with max subtraction.
pub fn softmax(x: &[f64], gamma: f64) -> Vec<f64> {
    graph::softmax_rows(x, x.len().max(1), gamma)
}
