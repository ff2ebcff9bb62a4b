//! A small CPU neural-network engine: tensors, layers with hand-written
//! backward passes, losses, SGD and a binary weights format.

mod layers;
mod loss;
mod tensor;
mod weights;

use thiserror::Error;

pub use layers::{
    softmax_rows, BatchNorm, Conv2d, Dense, Dropout, Layer, LayerSpec, Lrn, LrnParams, MaxPool2d, Param, Relu,
    Sequential, Softmax,
};
pub use loss::{softmax_cross_entropy, smoothed_cross_entropy, total_loss, HeadLoss};
pub use tensor::{concat_features, matmul, split_features, Real, Tensor};
pub use weights::{load_weights, save_weights, WeightsFile, WEIGHTS_MAGIC, WEIGHTS_VERSION};

#[derive(Debug, Error)]
pub enum NnError {
    #[error("layer {layer}: expected input {expected}, got {got:?}")]
    ShapeMismatch { layer: String, expected: String, got: Vec<usize> },
    #[error("layer {layer}: backward called without a preceding train-mode forward")]
    BackwardBeforeForward { layer: String },
    #[error("layer {layer}: produced a non-finite value")]
    NonFinite { layer: String },
    #[error("invalid network specification: {0}")]
    InvalidSpec(String),
    #[error("loss weight {index} is negative ({value})")]
    NegativeWeight { index: usize, value: f64 },
    #[error("{path}: {reason}")]
    Format { path: String, reason: String },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Train mode caches activations and updates batch-norm statistics; eval
/// mode uses running statistics and disables dropout.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Plain SGD: `p ← p − lr · ∂L/∂p` for every trainable parameter.
pub fn sgd_step<S: Real>(net: &mut Sequential<S>, lr: f64) {
    let lr = S::lit(lr);
    for (_, p) in net.named_params_mut() {
        if let Some(g) = p.grad.as_ref() {
            p.value.data_mut().iter_mut().zip(g.data()).for_each(|(v, g)| *v -= lr * *g);
        }
    }
}
