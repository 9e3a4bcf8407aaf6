//! Minimal reverse-mode engine over a fixed layer vocabulary:
//! fully-connected, PReLU, batch normalization, dropout, concatenation and
//! element-wise addition, plus Adam and a cosine learning-rate schedule.

mod gradcheck;
mod matrix;
mod network;
mod optim;

pub use gradcheck::{finite_diff_grad, relative_error};
pub use matrix::Matrix;
pub use network::{
    Activations, Gradients, LayerSpec, Mode, Network, NodeId, ParamStore, Tensor, BN_EPS,
    BN_MOMENTUM, PRELU_INIT_SLOPE,
};
pub use optim::{adam_step, cosine_lr, AdamState, Schedule};
