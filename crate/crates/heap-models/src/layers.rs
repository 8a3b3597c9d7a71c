//! Thin layer wrappers that bundle parameters with their op call and register
//! themselves under stable dotted names.

use heap_tensor::{fan_in_uniform, ones_leaf, ops, zeros_leaf, Parameter, Real, Tensor};
use rand_chacha::ChaCha20Rng;

use crate::ModelError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

pub struct Conv2d<R: Real> {
    pub weight: Parameter<R>,
    pub bias: Parameter<R>,
    pub stride: usize,
}

impl<R: Real> Conv2d<R> {
    pub fn new(
        name: &str,
        rng: &mut ChaCha20Rng,
        c_in: usize,
        c_out: usize,
        k: usize,
        stride: usize,
        slope: f64,
    ) -> Self {
        let weight = Parameter::new(
            format!("{name}.w"),
            fan_in_uniform(rng, &[c_out, c_in, k, k], c_in * k * k, slope),
        );
        let bias = Parameter::new(format!("{name}.b"), zeros_leaf(&[c_out]));
        Self { weight, bias, stride }
    }

    pub fn forward(&self, x: &Tensor<R>) -> Result<Tensor<R>, ModelError> {
        Ok(ops::conv2d_periodic(x, &self.weight.tensor, Some(&self.bias.tensor), self.stride)?)
    }

    pub fn collect(&self, out: &mut Vec<Parameter<R>>) {
        out.push(self.weight.clone());
        out.push(self.bias.clone());
    }
}

pub struct ConvT2d<R: Real> {
    pub weight: Parameter<R>,
    pub bias: Parameter<R>,
    pub stride: usize,
}

impl<R: Real> ConvT2d<R> {
    pub fn new(
        name: &str,
        rng: &mut ChaCha20Rng,
        c_in: usize,
        c_out: usize,
        k: usize,
        stride: usize,
        slope: f64,
    ) -> Self {
        let weight = Parameter::new(
            format!("{name}.w"),
            fan_in_uniform(rng, &[c_in, c_out, k, k], c_in * k * k, slope),
        );
        let bias = Parameter::new(format!("{name}.b"), zeros_leaf(&[c_out]));
        Self { weight, bias, stride }
    }

    pub fn forward(&self, x: &Tensor<R>) -> Result<Tensor<R>, ModelError> {
        Ok(ops::conv_transpose2d_periodic(
            x,
            &self.weight.tensor,
            Some(&self.bias.tensor),
            self.stride,
        )?)
    }

    pub fn collect(&self, out: &mut Vec<Parameter<R>>) {
        out.push(self.weight.clone());
        out.push(self.bias.clone());
    }
}

pub struct BatchNorm2d<R: Real> {
    pub gamma: Parameter<R>,
    pub beta: Parameter<R>,
    pub running_mean: Tensor<R>,
    pub running_var: Tensor<R>,
    name: String,
}

impl<R: Real> BatchNorm2d<R> {
    pub fn new(name: &str, channels: usize) -> Self {
        Self {
            gamma: Parameter::new(format!("{name}.g"), ones_leaf(&[channels])),
            beta: Parameter::new(format!("{name}.bt"), zeros_leaf(&[channels])),
            running_mean: Tensor::zeros(&[channels]),
            running_var: Tensor::from_vec(&[channels], vec![R::ONE; channels]),
            name: name.to_string(),
        }
    }

    pub fn forward(&self, x: &Tensor<R>, mode: Mode) -> Result<Tensor<R>, ModelError> {
        Ok(ops::batch_norm(
            x,
            &self.gamma.tensor,
            &self.beta.tensor,
            &self.running_mean,
            &self.running_var,
            0.1,
            1e-5,
            mode == Mode::Train,
        )?)
    }

    pub fn collect(&self, out: &mut Vec<Parameter<R>>) {
        out.push(self.gamma.clone());
        out.push(self.beta.clone());
    }

    /// Running statistics, named like parameters for checkpointing.
    pub fn buffers(&self, out: &mut Vec<(String, Tensor<R>)>) {
        out.push((format!("{}.rm", self.name), self.running_mean.clone()));
        out.push((format!("{}.rv", self.name), self.running_var.clone()));
    }
}

pub struct LayerNorm2d<R: Real> {
    pub gamma: Parameter<R>,
    pub beta: Parameter<R>,
}

impl<R: Real> LayerNorm2d<R> {
    pub fn new(name: &str, channels: usize, size: usize) -> Self {
        Self {
            gamma: Parameter::new(format!("{name}.g"), ones_leaf(&[channels, size, size])),
            beta: Parameter::new(format!("{name}.bt"), zeros_leaf(&[channels, size, size])),
        }
    }

    pub fn forward(&self, x: &Tensor<R>) -> Result<Tensor<R>, ModelError> {
        Ok(ops::layer_norm(x, &self.gamma.tensor, &self.beta.tensor, 1e-5)?)
    }

    pub fn collect(&self, out: &mut Vec<Parameter<R>>) {
        out.push(self.gamma.clone());
        out.push(self.beta.clone());
    }
}
