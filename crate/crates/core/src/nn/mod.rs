//! Minimal feed-forward training core: layer specs, flat parameters,
//! forward/backward passes, SGD and evaluation.

mod kernels;
mod layers;
mod model;
mod params;
mod train;

pub use layers::{infer_shapes, LayerSpec, Shape};
pub use model::{build_model, forward, loss, loss_and_grad, Arch, Batch};
pub use params::{LayerSlot, ParameterVector};
pub use train::{evaluate, l2_norm, sgd_step, Evaluation, TrainConfig};
