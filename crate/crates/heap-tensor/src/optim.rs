use crate::{Parameter, Real};

/// Adam with bias correction. Moment slots are aligned positionally with the
/// parameter list handed to `new`, so always pass the same list to `step`.
pub struct Adam<R: Real> {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    step_count: u64,
    m: Vec<Vec<R>>,
    v: Vec<Vec<R>>,
}

impl<R: Real> Adam<R> {
    pub fn new(params: &[Parameter<R>], lr: f64) -> Self {
        Self::with_betas(params, lr, 0.9, 0.999, 1e-8)
    }

    pub fn with_betas(
        params: &[Parameter<R>],
        lr: f64,
        beta1: f64,
        beta2: f64,
        eps: f64,
    ) -> Self {
        Self {
            lr,
            beta1,
            beta2,
            eps,
            step_count: 0,
            m: params.iter().map(|p| vec![R::ZERO; p.tensor.numel()]).collect(),
            v: params.iter().map(|p| vec![R::ZERO; p.tensor.numel()]).collect(),
        }
    }

    pub fn lr(&self) -> f64 {
        self.lr
    }

    pub fn set_lr(&mut self, lr: f64) {
        self.lr = lr;
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    /// One update. Parameters whose gradient slot is empty are skipped
    /// entirely (no moment decay), matching the convention that an untouched
    /// parameter stays untouched.
    pub fn step(&mut self, params: &[Parameter<R>]) {
        assert_eq!(params.len(), self.m.len(), "parameter list changed size");
        self.step_count += 1;
        let t = self.step_count as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        let b1 = R::from_f64(self.beta1);
        let b2 = R::from_f64(self.beta2);
        let one_m_b1 = R::from_f64(1.0 - self.beta1);
        let one_m_b2 = R::from_f64(1.0 - self.beta2);
        let inv_bc1 = R::from_f64(1.0 / bc1);
        let inv_bc2 = R::from_f64(1.0 / bc2);
        let lr = R::from_f64(self.lr);
        let eps = R::from_f64(self.eps);

        for (i, p) in params.iter().enumerate() {
            let Some(grad) = p.tensor.grad() else { continue };
            let m = &mut self.m[i];
            let v = &mut self.v[i];
            let mut vals = p.tensor.values_mut();
            for j in 0..grad.len() {
                let g = grad[j];
                m[j] = b1 * m[j] + one_m_b1 * g;
                v[j] = b2 * v[j] + one_m_b2 * g * g;
                let m_hat = m[j] * inv_bc1;
                let v_hat = v[j] * inv_bc2;
                vals[j] -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
    }

    /// Serializable view of the optimizer state: `(step, per-param (m, v))`.
    pub fn state(&self) -> (u64, &[Vec<R>], &[Vec<R>]) {
        (self.step_count, &self.m, &self.v)
    }

    pub fn restore(&mut self, step_count: u64, m: Vec<Vec<R>>, v: Vec<Vec<R>>) {
        assert_eq!(m.len(), self.m.len());
        assert_eq!(v.len(), self.v.len());
        self.step_count = step_count;
        self.m = m;
        self.v = v;
    }
}

/// Clears gradient slots on every parameter.
pub fn zero_grads<R: Real>(params: &[Parameter<R>]) {
    for p in params {
        p.tensor.zero_grad();
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::Tensor;

    fn param(vals: Vec<f64>) -> Parameter<f64> {
        Parameter::new("p", Tensor::leaf(&[vals.len()], vals))
    }

    #[test]
    fn no_gradient_means_no_change() {
        let p = param(vec![1.0, 2.0]);
        let mut opt = Adam::new(std::slice::from_ref(&p), 0.1);
        opt.step(std::slice::from_ref(&p));
        assert_eq!(p.tensor.to_vec(), vec![1.0, 2.0]);
    }

    #[test]
    fn zero_gradient_means_no_change() {
        let p = param(vec![1.0, 2.0]);
        p.tensor.accumulate_grad(&[0.0, 0.0]);
        let mut opt = Adam::new(std::slice::from_ref(&p), 0.1);
        opt.step(std::slice::from_ref(&p));
        assert_eq!(p.tensor.to_vec(), vec![1.0, 2.0]);
    }

    /// Under a constant gradient the update magnitude approaches `lr` in the
    /// direction of `-sign(g)`.
    #[test]
    fn constant_gradient_asymptote() {
        let p = param(vec![0.0]);
        let mut opt = Adam::new(std::slice::from_ref(&p), 0.01);
        let mut prev = 0.0;
        let mut last_delta = 0.0;
        for _ in 0..200 {
            p.tensor.zero_grad();
            p.tensor.accumulate_grad(&[3.0]);
            opt.step(std::slice::from_ref(&p));
            let cur = p.tensor.to_vec()[0];
            last_delta = cur - prev;
            prev = cur;
        }
        assert!((last_delta - (-0.01)).abs() < 1e-6, "delta {last_delta}");
    }

    /// One step on a quadratic against a hand-rolled scalar reference.
    #[test]
    fn single_step_matches_scalar_reference() {
        let x0 = 1.7;
        let p = param(vec![x0]);
        // loss = (x - 5)^2, grad = 2 (x - 5)
        let g = 2.0 * (x0 - 5.0);
        p.tensor.accumulate_grad(&[g]);
        let (lr, b1, b2, eps) = (0.003, 0.9, 0.999, 1e-8);
        let mut opt = Adam::with_betas(std::slice::from_ref(&p), lr, b1, b2, eps);
        opt.step(std::slice::from_ref(&p));

        let m = (1.0 - b1) * g;
        let v = (1.0 - b2) * g * g;
        let m_hat = m / (1.0 - b1);
        let v_hat = v / (1.0 - b2);
        let expected = x0 - lr * m_hat / (v_hat.sqrt() + eps);
        assert!((p.tensor.to_vec()[0] - expected).abs() < 1e-12);
    }
}
