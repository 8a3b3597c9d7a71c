use heap_solver::{SystemState, Trajectory};

use crate::PipelineError;

/// Per-channel standardization statistics, computed on the autoencoder
/// training steps only and applied everywhere downstream.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormStats {
    /// `[n, phi]` means.
    pub mean: [f64; 2],
    /// `[n, phi]` standard deviations.
    pub std: [f64; 2],
}

impl NormStats {
    pub fn identity() -> Self {
        Self { mean: [0.0, 0.0], std: [1.0, 1.0] }
    }

    pub fn compute(traj: &Trajectory, indices: &[usize]) -> Result<Self, PipelineError> {
        if indices.is_empty() {
            return Err(PipelineError::Config("normalization needs at least one step".into()));
        }
        let per_field = (traj.nx() * traj.ny()) as f64;
        let count = indices.len() as f64 * per_field;
        let mut sum = [0.0f64; 2];
        let mut sum_sq = [0.0f64; 2];
        for &i in indices {
            let s = traj.states.get(i).ok_or_else(|| {
                PipelineError::Config(format!("split index {i} outside trajectory of {}", traj.len()))
            })?;
            for (c, field) in [&s.n, &s.phi].into_iter().enumerate() {
                for &v in field.values() {
                    sum[c] += v;
                    sum_sq[c] += v * v;
                }
            }
        }
        let mut mean = [0.0; 2];
        let mut std = [0.0; 2];
        for c in 0..2 {
            mean[c] = sum[c] / count;
            let var = (sum_sq[c] / count - mean[c] * mean[c]).max(0.0);
            std[c] = var.sqrt();
            if std[c] <= 0.0 {
                return Err(PipelineError::Config(format!(
                    "channel {c} has zero variance over the training split"
                )));
            }
        }
        Ok(Self { mean, std })
    }

    /// Packs one state into normalized `[2, ny, nx]` f32 values.
    pub fn state_to_f32(&self, state: &SystemState) -> Vec<f32> {
        let mut out = Vec::with_capacity(2 * state.n.values().len());
        for (c, field) in [&state.n, &state.phi].into_iter().enumerate() {
            let (m, s) = (self.mean[c], self.std[c]);
            out.extend(field.values().iter().map(|&v| ((v - m) / s) as f32));
        }
        out
    }

    /// Undoes the normalization for decoded `[2, ny, nx]` values.
    pub fn denorm_channel(&self, channel: usize, v: f32) -> f64 {
        v as f64 * self.std[channel] + self.mean[channel]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use heap_solver::{Field2D, SolverParams};

    #[test]
    fn compute_and_apply() {
        let params = SolverParams { nx: 4, ny: 4, ..Default::default() };
        let s0 = SystemState {
            n: Field2D::from_fn(4, 4, |x, _| x as f64),
            phi: Field2D::from_fn(4, 4, |_, y| 2.0 * y as f64),
        };
        let traj = Trajectory { states: vec![s0.clone()], dt_output: 1.0, params };
        let norm = NormStats::compute(&traj, &[0]).unwrap();
        assert!((norm.mean[0] - 1.5).abs() < 1e-12);
        let packed = norm.state_to_f32(&s0);
        let mean: f32 = packed[..16].iter().sum::<f32>() / 16.0;
        assert!(mean.abs() < 1e-6);
        let back = norm.denorm_channel(0, packed[3]);
        assert!((back - 3.0).abs() < 1e-6);
    }

    #[test]
    fn zero_variance_rejected() {
        let params = SolverParams { nx: 4, ny: 4, ..Default::default() };
        let s0 = SystemState {
            n: Field2D::from_fn(4, 4, |_, _| 1.0),
            phi: Field2D::from_fn(4, 4, |_, y| y as f64),
        };
        let traj = Trajectory { states: vec![s0], dt_output: 1.0, params };
        assert!(NormStats::compute(&traj, &[0]).is_err());
    }
}
