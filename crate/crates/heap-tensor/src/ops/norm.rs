//! Batch and layer normalization over `[b, c, h, w]` activations.

use crate::{Real, Tensor, TensorError};

/// Batch normalization per channel with learned affine terms.
///
/// Training mode normalizes by batch statistics over `(b, h, w)` and folds
/// them into the running buffers with the given momentum
/// (`running = (1 - momentum) * running + momentum * batch`); eval mode
/// normalizes by the running buffers. Population (biased) variance is used in
/// both places.
#[allow(clippy::too_many_arguments)]
pub fn batch_norm<R: Real>(
    input: &Tensor<R>,
    gamma: &Tensor<R>,
    beta: &Tensor<R>,
    running_mean: &Tensor<R>,
    running_var: &Tensor<R>,
    momentum: f64,
    eps: f64,
    training: bool,
) -> Result<Tensor<R>, TensorError> {
    let shape = input.shape();
    if shape.len() != 4 {
        return Err(TensorError::Shape(format!("batch_norm expects 4-d input, got {shape:?}")));
    }
    let (b, c, h, w) = (shape[0], shape[1], shape[2], shape[3]);
    for (t, name) in [(gamma, "gamma"), (beta, "beta"), (running_mean, "running_mean"), (running_var, "running_var")] {
        if t.shape() != [c] {
            return Err(TensorError::Shape(format!(
                "batch_norm {name} shape {:?} does not match {c} channels",
                t.shape()
            )));
        }
    }
    if training && b < 2 {
        return Err(TensorError::Contract(
            "batch_norm in training mode requires batch size >= 2".into(),
        ));
    }

    let plane = h * w;
    let per_channel = b * plane;
    let epsr = R::from_f64(eps);

    // Channel statistics actually used for normalization.
    let (mean, var) = if training {
        let inp = input.values();
        let mut mean = vec![R::ZERO; c];
        let mut var = vec![R::ZERO; c];
        let inv_m = R::from_f64(1.0 / per_channel as f64);
        for ch in 0..c {
            let mut acc = R::ZERO;
            for bi in 0..b {
                let base = (bi * c + ch) * plane;
                acc += inp[base..base + plane].iter().copied().sum();
            }
            let mu = acc * inv_m;
            let mut acc2 = R::ZERO;
            for bi in 0..b {
                let base = (bi * c + ch) * plane;
                for &v in &inp[base..base + plane] {
                    let d = v - mu;
                    acc2 += d * d;
                }
            }
            mean[ch] = mu;
            var[ch] = acc2 * inv_m;
        }
        // Fold into the running buffers in place; these are leaves outside
        // the graph.
        let mom = R::from_f64(momentum);
        let keep = R::from_f64(1.0 - momentum);
        {
            let mut rm = running_mean.values_mut();
            let mut rv = running_var.values_mut();
            for ch in 0..c {
                rm[ch] = keep * rm[ch] + mom * mean[ch];
                rv[ch] = keep * rv[ch] + mom * var[ch];
            }
        }
        (mean, var)
    } else {
        (running_mean.to_vec(), running_var.to_vec())
    };

    let inv_std: Vec<R> = var.iter().map(|&v| R::ONE / (v + epsr).sqrt()).collect();

    let mut out = vec![R::ZERO; b * c * plane];
    {
        let inp = input.values();
        let gv = gamma.values();
        let bv = beta.values();
        for bi in 0..b {
            for ch in 0..c {
                let base = (bi * c + ch) * plane;
                let (mu, istd, ga, be) = (mean[ch], inv_std[ch], gv[ch], bv[ch]);
                for (o, &x) in out[base..base + plane].iter_mut().zip(&inp[base..base + plane]) {
                    *o = (x - mu) * istd * ga + be;
                }
            }
        }
    }

    let (ic, gc) = (input.clone(), gamma.clone());
    Ok(Tensor::from_op(
        shape.to_vec(),
        out,
        vec![input.clone(), gamma.clone(), beta.clone()],
        Box::new(move |out_t: &Tensor<R>| {
            let gout = out_t.grad().expect("output grad present");
            let inp = ic.values();
            let gv = gc.values();
            let m = R::from_f64(per_channel as f64);

            let mut dinput = vec![R::ZERO; inp.len()];
            let mut dgamma = vec![R::ZERO; c];
            let mut dbeta = vec![R::ZERO; c];

            for ch in 0..c {
                let (mu, istd, ga) = (mean[ch], inv_std[ch], gv[ch]);
                // Reductions over the channel slab.
                let mut sum_g = R::ZERO;
                let mut sum_gx = R::ZERO;
                for bi in 0..b {
                    let base = (bi * c + ch) * plane;
                    for (&g, &x) in gout[base..base + plane].iter().zip(&inp[base..base + plane]) {
                        sum_g += g;
                        sum_gx += g * (x - mu) * istd;
                    }
                }
                dgamma[ch] = sum_gx;
                dbeta[ch] = sum_g;

                if training {
                    // dL/dx = gamma*istd/m * (m*g - sum(g) - xhat * sum(g*xhat))
                    let k = ga * istd;
                    for bi in 0..b {
                        let base = (bi * c + ch) * plane;
                        for i in base..base + plane {
                            let xhat = (inp[i] - mu) * istd;
                            dinput[i] = k * (gout[i] - (sum_g + xhat * sum_gx) * (R::ONE / m));
                        }
                    }
                } else {
                    let k = ga * istd;
                    for bi in 0..b {
                        let base = (bi * c + ch) * plane;
                        for i in base..base + plane {
                            dinput[i] = k * gout[i];
                        }
                    }
                }
            }
            vec![Some(dinput), Some(dgamma), Some(dbeta)]
        }),
    ))
}

/// Layer normalization over `(c, h, w)` per sample, with elementwise affine
/// terms of shape `[c, h, w]`.
pub fn layer_norm<R: Real>(
    input: &Tensor<R>,
    gamma: &Tensor<R>,
    beta: &Tensor<R>,
    eps: f64,
) -> Result<Tensor<R>, TensorError> {
    let shape = input.shape();
    if shape.len() != 4 {
        return Err(TensorError::Shape(format!("layer_norm expects 4-d input, got {shape:?}")));
    }
    let (b, c, h, w) = (shape[0], shape[1], shape[2], shape[3]);
    let slab = c * h * w;
    if gamma.numel() != slab || beta.numel() != slab {
        return Err(TensorError::Shape(format!(
            "layer_norm affine size {} does not match sample size {slab}",
            gamma.numel()
        )));
    }

    let inv_m = R::from_f64(1.0 / slab as f64);
    let epsr = R::from_f64(eps);
    let mut means = vec![R::ZERO; b];
    let mut inv_stds = vec![R::ZERO; b];
    let mut out = vec![R::ZERO; b * slab];
    {
        let inp = input.values();
        let gv = gamma.values();
        let bv = beta.values();
        for bi in 0..b {
            let xs = &inp[bi * slab..(bi + 1) * slab];
            let mu: R = xs.iter().copied().sum::<R>() * inv_m;
            let mut acc = R::ZERO;
            for &x in xs {
                let d = x - mu;
                acc += d * d;
            }
            let istd = R::ONE / (acc * inv_m + epsr).sqrt();
            means[bi] = mu;
            inv_stds[bi] = istd;
            let dst = &mut out[bi * slab..(bi + 1) * slab];
            for i in 0..slab {
                dst[i] = (xs[i] - mu) * istd * gv[i] + bv[i];
            }
        }
    }

    let (ic, gc) = (input.clone(), gamma.clone());
    Ok(Tensor::from_op(
        shape.to_vec(),
        out,
        vec![input.clone(), gamma.clone(), beta.clone()],
        Box::new(move |out_t: &Tensor<R>| {
            let gout = out_t.grad().expect("output grad present");
            let inp = ic.values();
            let gv = gc.values();
            let m = R::from_f64(slab as f64);

            let mut dinput = vec![R::ZERO; inp.len()];
            let mut dgamma = vec![R::ZERO; slab];
            let mut dbeta = vec![R::ZERO; slab];

            for bi in 0..b {
                let xs = &inp[bi * slab..(bi + 1) * slab];
                let gs = &gout[bi * slab..(bi + 1) * slab];
                let (mu, istd) = (means[bi], inv_stds[bi]);

                let mut sum_dxhat = R::ZERO;
                let mut sum_dxhat_xhat = R::ZERO;
                for i in 0..slab {
                    let xhat = (xs[i] - mu) * istd;
                    let dxhat = gs[i] * gv[i];
                    sum_dxhat += dxhat;
                    sum_dxhat_xhat += dxhat * xhat;
                    dgamma[i] += gs[i] * xhat;
                    dbeta[i] += gs[i];
                }
                let dst = &mut dinput[bi * slab..(bi + 1) * slab];
                for i in 0..slab {
                    let xhat = (xs[i] - mu) * istd;
                    let dxhat = gs[i] * gv[i];
                    dst[i] = istd * (dxhat - (sum_dxhat + xhat * sum_dxhat_xhat) * (R::ONE / m));
                }
            }
            vec![Some(dinput), Some(dgamma), Some(dbeta)]
        }),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layer_norm_standardizes_each_sample() {
        let vals: Vec<f64> = (0..2 * 3 * 4 * 4).map(|i| (i as f64 * 0.7).sin() * 3.0 + 1.0).collect();
        let x = Tensor::from_vec(&[2, 3, 4, 4], vals);
        let gamma = Tensor::from_vec(&[3, 4, 4], vec![1.0; 48]);
        let beta = Tensor::from_vec(&[3, 4, 4], vec![0.0; 48]);
        let y = layer_norm(&x, &gamma, &beta, 1e-9).unwrap();
        let yv = y.to_vec();
        for bi in 0..2 {
            let s = &yv[bi * 48..(bi + 1) * 48];
            let mu: f64 = s.iter().sum::<f64>() / 48.0;
            let var: f64 = s.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / 48.0;
            assert!(mu.abs() < 1e-6, "mean {mu}");
            assert!((var - 1.0).abs() < 1e-6, "var {var}");
        }
    }

    #[test]
    fn batch_norm_eval_identity_with_unit_stats() {
        let vals: Vec<f32> = (0..2 * 2 * 3 * 3).map(|i| i as f32 * 0.1).collect();
        let x = Tensor::from_vec(&[2, 2, 3, 3], vals.clone());
        let gamma = Tensor::from_vec(&[2], vec![1.0f32; 2]);
        let beta = Tensor::from_vec(&[2], vec![0.0f32; 2]);
        let rm = Tensor::from_vec(&[2], vec![0.0f32; 2]);
        let rv = Tensor::from_vec(&[2], vec![1.0f32; 2]);
        let y = batch_norm(&x, &gamma, &beta, &rm, &rv, 0.1, 0.0, false).unwrap();
        for (a, b) in y.to_vec().iter().zip(&vals) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn batch_norm_training_rejects_batch_of_one() {
        let x = Tensor::<f32>::zeros(&[1, 2, 3, 3]);
        let gamma = Tensor::from_vec(&[2], vec![1.0f32; 2]);
        let beta = Tensor::from_vec(&[2], vec![0.0f32; 2]);
        let rm = Tensor::from_vec(&[2], vec![0.0f32; 2]);
        let rv = Tensor::from_vec(&[2], vec![1.0f32; 2]);
        assert!(matches!(
            batch_norm(&x, &gamma, &beta, &rm, &rv, 0.1, 1e-5, true),
            Err(TensorError::Contract(_))
        ));
    }

    #[test]
    fn batch_norm_training_updates_running_stats() {
        let x = Tensor::from_vec(&[2, 1, 1, 2], vec![1.0f64, 3.0, 5.0, 7.0]);
        let gamma = Tensor::from_vec(&[1], vec![1.0]);
        let beta = Tensor::from_vec(&[1], vec![0.0]);
        let rm = Tensor::from_vec(&[1], vec![0.0]);
        let rv = Tensor::from_vec(&[1], vec![1.0]);
        batch_norm(&x, &gamma, &beta, &rm, &rv, 0.1, 1e-5, true).unwrap();
        // Batch mean 4, population var 5.
        assert!((rm.to_vec()[0] - 0.4).abs() < 1e-12);
        assert!((rv.to_vec()[0] - (0.9 + 0.5)).abs() < 1e-12);
    }
}
