mod conv;
mod norm;

pub use conv::{conv2d_periodic, conv_transpose2d_periodic};
pub use norm::{batch_norm, layer_norm};

use crate::{Real, Tensor};

fn assert_same_shape<R: Real>(a: &Tensor<R>, b: &Tensor<R>, op: &str) {
    assert_eq!(
        a.shape(),
        b.shape(),
        "{op}: shape mismatch {:?} vs {:?}",
        a.shape(),
        b.shape()
    );
}

pub fn add<R: Real>(a: &Tensor<R>, b: &Tensor<R>) -> Tensor<R> {
    assert_same_shape(a, b, "add");
    let values = a.values().iter().zip(b.values().iter()).map(|(&x, &y)| x + y).collect();
    Tensor::from_op(
        a.shape().to_vec(),
        values,
        vec![a.clone(), b.clone()],
        Box::new(|out: &Tensor<R>| {
            let g = out.grad().expect("output grad present");
            vec![Some(g.clone()), Some(g)]
        }),
    )
}

pub fn sub<R: Real>(a: &Tensor<R>, b: &Tensor<R>) -> Tensor<R> {
    assert_same_shape(a, b, "sub");
    let values = a.values().iter().zip(b.values().iter()).map(|(&x, &y)| x - y).collect();
    Tensor::from_op(
        a.shape().to_vec(),
        values,
        vec![a.clone(), b.clone()],
        Box::new(|out: &Tensor<R>| {
            let g = out.grad().expect("output grad present");
            let neg: Vec<R> = g.iter().map(|&v| -v).collect();
            vec![Some(g), Some(neg)]
        }),
    )
}

pub fn mul<R: Real>(a: &Tensor<R>, b: &Tensor<R>) -> Tensor<R> {
    assert_same_shape(a, b, "mul");
    let values = a.values().iter().zip(b.values().iter()).map(|(&x, &y)| x * y).collect();
    let (ac, bc) = (a.clone(), b.clone());
    Tensor::from_op(
        a.shape().to_vec(),
        values,
        vec![a.clone(), b.clone()],
        Box::new(move |out: &Tensor<R>| {
            let g = out.grad().expect("output grad present");
            let da: Vec<R> = g.iter().zip(bc.values().iter()).map(|(&g, &y)| g * y).collect();
            let db: Vec<R> = g.iter().zip(ac.values().iter()).map(|(&g, &x)| g * x).collect();
            vec![Some(da), Some(db)]
        }),
    )
}

pub fn scale<R: Real>(a: &Tensor<R>, c: f64) -> Tensor<R> {
    let cr = R::from_f64(c);
    let values = a.values().iter().map(|&x| x * cr).collect();
    Tensor::from_op(
        a.shape().to_vec(),
        values,
        vec![a.clone()],
        Box::new(move |out: &Tensor<R>| {
            let g = out.grad().expect("output grad present");
            vec![Some(g.iter().map(|&v| v * cr).collect())]
        }),
    )
}

/// Elementwise leaky rectifier with the given negative slope.
pub fn leaky_relu<R: Real>(a: &Tensor<R>, negative_slope: f64) -> Tensor<R> {
    let s = R::from_f64(negative_slope);
    let values = a
        .values()
        .iter()
        .map(|&x| if x > R::ZERO { x } else { x * s })
        .collect();
    let ac = a.clone();
    Tensor::from_op(
        a.shape().to_vec(),
        values,
        vec![a.clone()],
        Box::new(move |out: &Tensor<R>| {
            let g = out.grad().expect("output grad present");
            let da: Vec<R> = g
                .iter()
                .zip(ac.values().iter())
                .map(|(&g, &x)| if x > R::ZERO { g } else { g * s })
                .collect();
            vec![Some(da)]
        }),
    )
}

pub fn sum<R: Real>(a: &Tensor<R>) -> Tensor<R> {
    let total = a.values().iter().copied().sum();
    let n = a.numel();
    Tensor::from_op(
        vec![1],
        vec![total],
        vec![a.clone()],
        Box::new(move |out: &Tensor<R>| {
            let g = out.grad().expect("output grad present")[0];
            vec![Some(vec![g; n])]
        }),
    )
}

pub fn mean<R: Real>(a: &Tensor<R>) -> Tensor<R> {
    let n = a.numel();
    let inv = R::from_f64(1.0 / n as f64);
    let total: R = a.values().iter().copied().sum();
    Tensor::from_op(
        vec![1],
        vec![total * inv],
        vec![a.clone()],
        Box::new(move |out: &Tensor<R>| {
            let g = out.grad().expect("output grad present")[0] * inv;
            vec![Some(vec![g; n])]
        }),
    )
}

/// Mean squared error `mean((pred - target)^2)`. No gradient flows into the
/// target.
pub fn mse_loss<R: Real>(pred: &Tensor<R>, target: &Tensor<R>) -> Tensor<R> {
    assert_same_shape(pred, target, "mse_loss");
    let n = pred.numel();
    let inv = R::from_f64(1.0 / n as f64);
    let total: R = pred
        .values()
        .iter()
        .zip(target.values().iter())
        .map(|(&p, &t)| (p - t) * (p - t))
        .sum();
    let (pc, tc) = (pred.clone(), target.clone());
    Tensor::from_op(
        vec![1],
        vec![total * inv],
        vec![pred.clone(), target.clone()],
        Box::new(move |out: &Tensor<R>| {
            let g = out.grad().expect("output grad present")[0];
            let two = R::from_f64(2.0);
            let dp: Vec<R> = pc
                .values()
                .iter()
                .zip(tc.values().iter())
                .map(|(&p, &t)| two * (p - t) * inv * g)
                .collect();
            vec![Some(dp), None]
        }),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backward;

    #[test]
    fn sum_grad_is_ones() {
        let x = Tensor::<f64>::leaf(&[4], vec![1.0, -2.0, 3.0, 0.5]);
        backward(&sum(&x));
        assert_eq!(x.grad().unwrap(), vec![1.0; 4]);
    }

    #[test]
    fn dot_with_self_grad_is_2x() {
        let x = Tensor::<f64>::leaf(&[3], vec![1.0, -2.0, 3.0]);
        let loss = sum(&mul(&x, &x));
        backward(&loss);
        assert_eq!(x.grad().unwrap(), vec![2.0, -4.0, 6.0]);
    }

    #[test]
    fn leaky_relu_values() {
        let x = Tensor::<f64>::from_vec(&[3], vec![0.0, 1.0, -1.0]);
        let y = leaky_relu(&x, 0.2);
        assert_eq!(y.to_vec(), vec![0.0, 1.0, -0.2]);
    }

    #[test]
    fn mse_matches_hand_value() {
        let p = Tensor::<f64>::leaf(&[2], vec![1.0, 3.0]);
        let t = Tensor::<f64>::from_vec(&[2], vec![0.0, 1.0]);
        let loss = mse_loss(&p, &t);
        assert!((loss.item() - 2.5).abs() < 1e-15);
        backward(&loss);
        assert_eq!(p.grad().unwrap(), vec![1.0, 2.0]);
    }

    #[test]
    fn shared_subgraph_accumulates_both_paths() {
        // loss = sum(x + x) => dloss/dx = 2.
        let x = Tensor::<f64>::leaf(&[2], vec![5.0, 7.0]);
        backward(&sum(&add(&x, &x)));
        assert_eq!(x.grad().unwrap(), vec![2.0, 2.0]);
    }
}
