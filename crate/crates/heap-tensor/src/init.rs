use rand::Rng;
use rand_chacha::ChaCha20Rng;

use crate::{Real, Tensor};

/// Uniform fan-in initialization: bound `gain * sqrt(3 / fan_in)` with the
/// leaky-rectifier gain `sqrt(2 / (1 + slope^2))`. Draws happen in a fixed
/// order from the provided stream, so construction order defines the weights.
pub fn fan_in_uniform<R: Real>(
    rng: &mut ChaCha20Rng,
    shape: &[usize],
    fan_in: usize,
    negative_slope: f64,
) -> Tensor<R> {
    assert!(fan_in > 0);
    let gain = (2.0 / (1.0 + negative_slope * negative_slope)).sqrt();
    let bound = gain * (3.0 / fan_in as f64).sqrt();
    let n: usize = shape.iter().product();
    let values: Vec<R> = (0..n).map(|_| R::from_f64(rng.gen_range(-bound..bound))).collect();
    Tensor::leaf(shape, values)
}

/// Zero-initialized trainable tensor (biases, affine offsets).
pub fn zeros_leaf<R: Real>(shape: &[usize]) -> Tensor<R> {
    Tensor::leaf(shape, vec![R::ZERO; shape.iter().product()])
}

/// One-initialized trainable tensor (affine gains).
pub fn ones_leaf<R: Real>(shape: &[usize]) -> Tensor<R> {
    Tensor::leaf(shape, vec![R::ONE; shape.iter().product()])
}
