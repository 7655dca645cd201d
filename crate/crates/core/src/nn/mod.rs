//! Minimal neural-network substrate for the two classifiers.
//!
//! Every layer implements an explicit forward/backward pair over `f64`
//! ndarray tensors, single-threaded and fully seeded, so training runs are
//! bit-reproducible on the same build. Gradients are verified against
//! central finite differences in the test suite.
//!
//! Parameters are uniformly 2-D: biases and per-channel scales are `[1, C]`
//! rows, embedding tables `[V, d]`, gate weights `[D, 4H]`.

mod activations;
mod adam;
mod attention;
mod dropout;
mod embedding;
mod encoder;
mod linear;
mod loss;
mod lstm;
mod norm;

#[cfg(test)]
pub(crate) mod testutil;

pub use activations::{Gelu, Relu};
pub use adam::Adam;
pub use attention::MultiHeadAttention;
pub use dropout::Dropout;
pub use embedding::Embedding;
pub use encoder::{EncoderLayer, FeedForward, TransformerEncoder};
pub use linear::Dense;
pub use loss::{bce_with_logits, sigmoid, softmax_cross_entropy, softmax_rows};
pub use lstm::{BiLstm, LastPool, Lstm};
pub use norm::{BatchNorm, LayerNorm};

use ndarray::Array2;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// A trainable tensor with its accumulated gradient.
#[derive(Debug, Clone)]
pub struct Param {
    pub value: Array2<f64>,
    pub grad: Array2<f64>,
}

impl Param {
    pub fn new(value: Array2<f64>) -> Self {
        let grad = Array2::zeros(value.raw_dim());
        Param { value, grad }
    }

    pub fn zeros(shape: (usize, usize)) -> Self {
        Param::new(Array2::zeros(shape))
    }

    pub fn zero_grad(&mut self) {
        self.grad.fill(0.0);
    }
}

/// Uniform(lo, hi) initialization.
pub fn uniform_init(rng: &mut ChaCha8Rng, shape: (usize, usize), lo: f64, hi: f64) -> Array2<f64> {
    Array2::from_shape_fn(shape, |_| rng.gen_range(lo..hi))
}

/// Glorot/Xavier uniform initialization for a `[fan_in, fan_out]` matrix.
pub fn glorot_init(rng: &mut ChaCha8Rng, shape: (usize, usize)) -> Array2<f64> {
    let limit = (6.0 / (shape.0 + shape.1) as f64).sqrt();
    uniform_init(rng, shape, -limit, limit)
}

/// Reshape `[B, T, C]` to `[B*T, C]` (standard layout).
pub(crate) fn flatten_bt(x: &ndarray::Array3<f64>) -> Array2<f64> {
    let (b, t, c) = x.dim();
    x.to_owned().into_shape((b * t, c)).expect("contiguous")
}

/// Reshape `[B*T, C]` back to `[B, T, C]`.
pub(crate) fn unflatten_bt(x: Array2<f64>, b: usize, t: usize) -> ndarray::Array3<f64> {
    let c = x.dim().1;
    x.into_shape((b, t, c)).expect("contiguous")
}
