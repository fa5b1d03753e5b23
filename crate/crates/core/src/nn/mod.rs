//! Minimal dense-tensor engine: layers, activations, the weighted logit loss,
//! a reverse-mode tape and gradient descent.

pub mod layers;
pub mod ops;
pub mod optim;
pub mod tape;
mod tensor;

pub use layers::{conv_ring_forward, dense_forward, ConvRingLayer, DenseLayer};
pub use ops::{relu, sigmoid, sigmoid_scalar, softmax_rows, softplus, weighted_ce_loss, LossKind};
pub use optim::{sgd_step, SgdSchedule};
pub use tape::{Gradients, Tape, Var};
pub use tensor::Tensor;
