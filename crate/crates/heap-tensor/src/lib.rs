//! Minimal reverse-mode autodiff engine: exactly the operators the periodic
//! convolutional models need, a fan-in initializer, and Adam.
//!
//! Generic over [`Real`]: `f32` for training, `f64` for gradient
//! verification. Tensors are cheap Rc handles; graphs live on one thread.

pub mod check;
mod init;
pub mod ops;
mod optim;
mod param;
mod real;
mod tensor;

pub use init::{fan_in_uniform, ones_leaf, zeros_leaf};
pub use optim::{zero_grads, Adam};
pub use param::Parameter;
pub use real::Real;
pub use tensor::{backward, grad_enabled, no_grad, Tensor};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum TensorError {
    #[error("shape error: {0}")]
    Shape(String),
    #[error("contract violation: {0}")]
    Contract(String),
}
