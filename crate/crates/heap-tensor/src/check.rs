//! Finite-difference verification utilities. Everything here runs in `f64`;
//! single-precision rounding drowns central differences.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::{backward, ops, Tensor};

/// Relative error between an analytic and a numeric derivative, floored so
/// that two near-zero values compare equal.
pub fn rel_err(analytic: f64, numeric: f64, floor: f64) -> f64 {
    let denom = analytic.abs().max(numeric.abs()).max(floor);
    (analytic - numeric).abs() / denom
}

/// Central difference of a scalar function of one coordinate.
pub fn central_diff(mut f: impl FnMut(f64) -> f64, x0: f64, h: f64) -> f64 {
    (f(x0 + h) - f(x0 - h)) / (2.0 * h)
}

/// Verifies analytic gradients of `loss_fn` w.r.t. every listed leaf by
/// central differences on up to `samples_per_tensor` coordinates each.
/// Returns the worst relative error observed.
///
/// `loss_fn` must rebuild the graph from the leaves' current values on every
/// call; leaf values are perturbed in place and restored.
pub fn check_leaf_gradients(
    leaves: &[Tensor<f64>],
    loss_fn: &dyn Fn() -> Tensor<f64>,
    samples_per_tensor: usize,
    h: f64,
    rng: &mut ChaCha20Rng,
) -> f64 {
    for leaf in leaves {
        leaf.zero_grad();
    }
    let loss = loss_fn();
    backward(&loss);
    let grads: Vec<Vec<f64>> = leaves
        .iter()
        .map(|l| l.grad().unwrap_or_else(|| vec![0.0; l.numel()]))
        .collect();

    let mut worst = 0.0_f64;
    for (leaf, grad) in leaves.iter().zip(&grads) {
        let n = leaf.numel();
        let sample: Vec<usize> = if n <= samples_per_tensor {
            (0..n).collect()
        } else {
            (0..samples_per_tensor).map(|_| rng.gen_range(0..n)).collect()
        };
        for idx in sample {
            let x0 = leaf.values()[idx];
            let numeric = central_diff(
                |x| {
                    leaf.values_mut()[idx] = x;
                    let v = crate::no_grad(|| loss_fn().item());
                    leaf.values_mut()[idx] = x0;
                    v
                },
                x0,
                h,
            );
            worst = worst.max(rel_err(grad[idx], numeric, 1e-6));
        }
    }
    worst
}

fn rand_tensor(rng: &mut ChaCha20Rng, shape: &[usize]) -> Tensor<f64> {
    let n: usize = shape.iter().product();
    Tensor::leaf(shape, (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect())
}

/// Like `rand_tensor` but with values kept away from zero, so rectifier kinks
/// cannot sit inside a finite-difference stencil.
fn rand_tensor_off_kink(rng: &mut ChaCha20Rng, shape: &[usize]) -> Tensor<f64> {
    let n: usize = shape.iter().product();
    let values = (0..n)
        .map(|_| {
            let v: f64 = rng.gen_range(0.05..1.0);
            if rng.gen_bool(0.5) {
                v
            } else {
                -v
            }
        })
        .collect();
    Tensor::leaf(shape, values)
}

/// Finite-difference sweep over every differentiable op on `cases` random
/// geometries. Returns the worst relative error observed; anything below
/// 1e-4 counts as a pass for the 64-bit verification mode.
pub fn op_gradient_sweep(cases: usize, seed: u64) -> f64 {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut worst = 0.0_f64;
    let h = 1e-5;

    for case in 0..cases {
        let kind = case % 8;
        let w = match kind {
            // conv2d, stride 1 or 2, with bias
            0 | 1 => {
                let stride = 1 + (case / 8) % 2;
                let b = rng.gen_range(1..3);
                let (ci, co) = (rng.gen_range(1..4), rng.gen_range(1..4));
                let hw = stride * rng.gen_range(2..5);
                let k = rng.gen_range(stride..5);
                let input = rand_tensor(&mut rng, &[b, ci, hw, hw]);
                let kernel = rand_tensor(&mut rng, &[co, ci, k, k]);
                let bias = rand_tensor(&mut rng, &[co]);
                let proj = rand_tensor(&mut rng, &[b, co, hw / stride, hw / stride]);
                let leaves = [input.clone(), kernel.clone(), bias.clone()];
                let loss_fn = move || {
                    let out =
                        ops::conv2d_periodic(&input, &kernel, Some(&bias), stride).unwrap();
                    ops::mean(&ops::mul(&out, &proj))
                };
                check_leaf_gradients(&leaves, &loss_fn, 8, h, &mut rng)
            }
            // conv_transpose2d
            2 | 3 => {
                let stride = 1 + (case / 8) % 2;
                let b = rng.gen_range(1..3);
                let (ci, co) = (rng.gen_range(1..4), rng.gen_range(1..4));
                let hw = rng.gen_range(2..5);
                let k = rng.gen_range(stride..5);
                let input = rand_tensor(&mut rng, &[b, ci, hw, hw]);
                let kernel = rand_tensor(&mut rng, &[ci, co, k, k]);
                let bias = rand_tensor(&mut rng, &[co]);
                let proj = rand_tensor(&mut rng, &[b, co, hw * stride, hw * stride]);
                let leaves = [input.clone(), kernel.clone(), bias.clone()];
                let loss_fn = move || {
                    let out =
                        ops::conv_transpose2d_periodic(&input, &kernel, Some(&bias), stride)
                            .unwrap();
                    ops::mean(&ops::mul(&out, &proj))
                };
                check_leaf_gradients(&leaves, &loss_fn, 8, h, &mut rng)
            }
            // batch_norm, training and eval
            4 => {
                let b = rng.gen_range(2..4);
                let c = rng.gen_range(1..4);
                let hw = rng.gen_range(2..5);
                let training = case % 16 < 8;
                let input = rand_tensor(&mut rng, &[b, c, hw, hw]);
                let gamma = rand_tensor_off_kink(&mut rng, &[c]);
                let beta = rand_tensor(&mut rng, &[c]);
                let proj = rand_tensor(&mut rng, &[b, c, hw, hw]);
                let rm = Tensor::from_vec(&[c], vec![0.1; c]);
                let rv = Tensor::from_vec(&[c], vec![0.9; c]);
                let leaves = [input.clone(), gamma.clone(), beta.clone()];
                let loss_fn = move || {
                    // Keep the buffers fixed across finite-difference probes.
                    let rm_c = Tensor::from_vec(&[c], rm.to_vec());
                    let rv_c = Tensor::from_vec(&[c], rv.to_vec());
                    let out = ops::batch_norm(
                        &input, &gamma, &beta, &rm_c, &rv_c, 0.1, 1e-5, training,
                    )
                    .unwrap();
                    ops::mean(&ops::mul(&out, &proj))
                };
                check_leaf_gradients(&leaves, &loss_fn, 8, h, &mut rng)
            }
            // layer_norm
            5 => {
                let b = rng.gen_range(1..3);
                let c = rng.gen_range(1..4);
                let hw = rng.gen_range(2..5);
                let input = rand_tensor(&mut rng, &[b, c, hw, hw]);
                let gamma = rand_tensor_off_kink(&mut rng, &[c, hw, hw]);
                let beta = rand_tensor(&mut rng, &[c, hw, hw]);
                let proj = rand_tensor(&mut rng, &[b, c, hw, hw]);
                let leaves = [input.clone(), gamma.clone(), beta.clone()];
                let loss_fn = move || {
                    let out = ops::layer_norm(&input, &gamma, &beta, 1e-5).unwrap();
                    ops::mean(&ops::mul(&out, &proj))
                };
                check_leaf_gradients(&leaves, &loss_fn, 8, h, &mut rng)
            }
            // pointwise chain: leaky_relu(a * b + c) scaled
            6 => {
                let n = rng.gen_range(2..20);
                let a = rand_tensor_off_kink(&mut rng, &[n]);
                let b = rand_tensor_off_kink(&mut rng, &[n]);
                let c = rand_tensor_off_kink(&mut rng, &[n]);
                let leaves = [a.clone(), b.clone(), c.clone()];
                let loss_fn = move || {
                    let y = ops::leaky_relu(&ops::add(&ops::mul(&a, &b), &c), 0.2);
                    ops::sum(&ops::scale(&y, 0.7))
                };
                check_leaf_gradients(&leaves, &loss_fn, 10, h, &mut rng)
            }
            // mse against a fixed target, plus sub
            _ => {
                let n = rng.gen_range(2..20);
                let p = rand_tensor(&mut rng, &[n]);
                let q = rand_tensor(&mut rng, &[n]);
                let target = Tensor::from_vec(&[n], vec![0.25; n]);
                let leaves = [p.clone(), q.clone()];
                let loss_fn = move || ops::mse_loss(&ops::sub(&p, &q), &target);
                check_leaf_gradients(&leaves, &loss_fn, 10, h, &mut rng)
            }
        };
        worst = worst.max(w);
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rel_err_floors_tiny_values() {
        assert_eq!(rel_err(1e-12, 0.0, 1e-6), 1e-6);
        assert!(rel_err(1.0, 1.0, 1e-6) < 1e-15);
    }

    #[test]
    fn central_diff_of_square() {
        let d = central_diff(|x| x * x, 3.0, 1e-6);
        assert!((d - 6.0).abs() < 1e-8);
    }
}
