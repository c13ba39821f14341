//! Minimal N-dimensional arrays with reverse-mode differentiation, the layer
//! primitives the networks are built from, a finite-difference checker and
//! the Adam update rule.

mod gradcheck;
mod graph;
mod init;
mod layers;
mod optim;
mod params;
mod tensor;

pub use gradcheck::{grad_check, GradCheckReport};
pub use graph::{conv1d_output_len, Graph, Var};
pub(crate) use graph::{sigmoid, smooth_l1};
pub use init::xavier_uniform;
pub use layers::{conv1d_forward, fully_connected, lstm_step, softmax_xent, LstmParams};
pub use optim::{adam_update, clip_grad_norm, global_norm, AdamConfig, OptimizerState};
pub use params::{BoundParams, ParamStore};
pub use tensor::{Real, Tensor};
