use crate::{Real, Tensor};

/// A named trainable tensor. Names are stable identifiers used by checkpoints
/// and must be unique within a model.
#[derive(Clone)]
pub struct Parameter<R: Real> {
    pub name: String,
    pub tensor: Tensor<R>,
}

impl<R: Real> Parameter<R> {
    pub fn new(name: impl Into<String>, tensor: Tensor<R>) -> Self {
        assert!(tensor.requires_grad(), "parameters must track gradients");
        Self { name: name.into(), tensor }
    }
}
