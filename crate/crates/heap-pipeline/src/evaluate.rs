//! Rollout scoring: generate a trajectory from one initial state, compute the
//! statistical metrics on it and on the ground-truth window, and reduce them
//! to normalized errors.

use heap_models::{Mode, Model};
use heap_solver::{Field2D, SystemState, Trajectory};
use heap_tensor::no_grad;

use crate::metrics::{
    autocorrelation, extrema_error, extrema_stats, normalized_error, spatial_spectrum,
    temporal_spectrum, Channel, ErrorDomain, ExtremaStats,
};
use crate::{NormStats, PipelineError};

/// Generated and ground-truth curves for one metric and channel.
#[derive(Debug, Clone)]
pub struct CurvePair {
    pub generated: Vec<f64>,
    pub truth: Vec<f64>,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct MetricErrors {
    /// `[n, phi]` spatial-spectrum errors (log domain).
    pub spatial: [f64; 2],
    /// `[n, phi]` temporal-spectrum errors (log domain).
    pub temporal: [f64; 2],
    /// `[n, phi]` autocorrelation errors (linear domain).
    pub autocorr: [f64; 2],
    /// Relative extrema-count deviation for phi (reported, not ranked).
    pub extrema: f64,
}

impl MetricErrors {
    pub fn spatial_worst(&self) -> f64 {
        self.spatial[0].max(self.spatial[1])
    }

    pub fn temporal_worst(&self) -> f64 {
        self.temporal[0].max(self.temporal[1])
    }

    pub fn autocorr_worst(&self) -> f64 {
        self.autocorr[0].max(self.autocorr[1])
    }

    /// Ranking statistic: the worst of the three primary metrics, each taken
    /// over both fields.
    pub fn worst_primary(&self) -> f64 {
        self.spatial_worst().max(self.temporal_worst()).max(self.autocorr_worst())
    }
}

#[derive(Debug, Clone)]
pub struct MetricsReport {
    /// `[n, phi]` curve pairs per metric family.
    pub spatial: [CurvePair; 2],
    pub temporal: [CurvePair; 2],
    pub autocorr: [CurvePair; 2],
    pub extrema_generated: ExtremaStats,
    pub extrema_truth: ExtremaStats,
    pub errors: MetricErrors,
    /// Set when the rollout went non-finite (step index).
    pub diverged_at: Option<usize>,
    pub rollout_secs: f64,
    pub autocorr_excluded_points: usize,
}

/// Computes every metric family on a generated window against a truth window
/// of the same length.
pub fn metrics_report(
    generated: &[SystemState],
    truth: &[SystemState],
) -> Result<MetricsReport, PipelineError> {
    if generated.len() != truth.len() || generated.is_empty() {
        return Err(PipelineError::Config(format!(
            "windows must have equal nonzero length, got {} vs {}",
            generated.len(),
            truth.len()
        )));
    }
    let max_lag = generated.len() / 4;
    let channels = [Channel::Density, Channel::Potential];

    let mut spatial_pairs = Vec::with_capacity(2);
    let mut temporal_pairs = Vec::with_capacity(2);
    let mut autocorr_pairs = Vec::with_capacity(2);
    let mut errors = MetricErrors::default();
    let mut excluded = 0usize;

    for ch in channels {
        let sg = spatial_spectrum(generated, ch)?;
        let st = spatial_spectrum(truth, ch)?;
        // Bin 0 is the domain mean: zero by gauge for phi and near machine
        // zero for n in the reference data, so its log power is numerical
        // dust. The curve keeps it; the error skips it.
        errors.spatial[ch.index()] =
            normalized_error(&sg.power[1..], &st.power[1..], ErrorDomain::Log10)?;
        spatial_pairs.push(CurvePair { generated: sg.power, truth: st.power });

        let tg = temporal_spectrum(generated, ch)?;
        let tt = temporal_spectrum(truth, ch)?;
        errors.temporal[ch.index()] = normalized_error(&tg.power, &tt.power, ErrorDomain::Log10)?;
        temporal_pairs.push(CurvePair { generated: tg.power, truth: tt.power });

        let ag = autocorrelation(generated, ch, max_lag)?;
        let at = autocorrelation(truth, ch, max_lag)?;
        errors.autocorr[ch.index()] =
            normalized_error(&ag.curve, &at.curve, ErrorDomain::Linear)?;
        excluded += ag.excluded_points + at.excluded_points;
        autocorr_pairs.push(CurvePair { generated: ag.curve, truth: at.curve });
    }

    let extrema_generated = extrema_stats(generated, Channel::Potential)?;
    let extrema_truth = extrema_stats(truth, Channel::Potential)?;
    errors.extrema = extrema_error(&extrema_generated, &extrema_truth);

    Ok(MetricsReport {
        spatial: [spatial_pairs.remove(0), spatial_pairs.remove(0)],
        temporal: [temporal_pairs.remove(0), temporal_pairs.remove(0)],
        autocorr: [autocorr_pairs.remove(0), autocorr_pairs.remove(0)],
        extrema_generated,
        extrema_truth,
        errors,
        diverged_at: None,
        rollout_secs: 0.0,
        autocorr_excluded_points: excluded,
    })
}

/// Decodes a batch of embeddings back to physical states.
fn decode_states(
    model: &Model<f32>,
    embs: &[heap_models::HierarchicalEmbedding<f32>],
    norm: &NormStats,
    nx: usize,
    ny: usize,
) -> Result<Vec<SystemState>, PipelineError> {
    let mut out = Vec::with_capacity(embs.len());
    for emb in embs {
        let decoded = no_grad(|| model.decoder.decode(emb, Mode::Eval))?;
        let v = decoded.values();
        let per = nx * ny;
        let n = Field2D::from_values(
            nx,
            ny,
            v[..per].iter().map(|&x| norm.denorm_channel(0, x)).collect(),
        )
        .map_err(PipelineError::Solver)?;
        let phi = Field2D::from_values(
            nx,
            ny,
            v[per..2 * per].iter().map(|&x| norm.denorm_channel(1, x)).collect(),
        )
        .map_err(PipelineError::Solver)?;
        out.push(SystemState { n, phi });
    }
    Ok(out)
}

/// Rolls the surrogate out `n_steps` from `truth.states[start]` and scores it
/// against the stored continuation `start+1 ..= start+n_steps`. On rollout
/// divergence the report compares the surviving prefix and carries the step
/// index.
pub fn evaluate_rollout(
    model: &Model<f32>,
    norm: &NormStats,
    truth: &Trajectory,
    start: usize,
    n_steps: usize,
) -> Result<MetricsReport, PipelineError> {
    if start + n_steps >= truth.len() + 1 {
        return Err(PipelineError::Config(format!(
            "rollout window start {start} + {n_steps} steps exceeds trajectory of {}",
            truth.len()
        )));
    }
    let t0 = std::time::Instant::now();
    let generated = rollout_states(model, norm, truth, start, n_steps)?;
    let rollout_secs = t0.elapsed().as_secs_f64();

    let (gen_states, diverged_at) = match generated {
        RolloutOutcome::Complete(states) => (states, None),
        RolloutOutcome::Diverged { states, step } => (states, Some(step)),
    };
    if gen_states.is_empty() {
        return Err(PipelineError::Config("rollout diverged on the first step".into()));
    }
    let truth_window = &truth.states[start + 1..start + 1 + gen_states.len()];
    let mut report = metrics_report(&gen_states, truth_window)?;
    report.diverged_at = diverged_at;
    report.rollout_secs = rollout_secs;
    Ok(report)
}

pub enum RolloutOutcome {
    Complete(Vec<SystemState>),
    Diverged { states: Vec<SystemState>, step: usize },
}

/// Encodes the initial state, advances in latent space, decodes every step,
/// and de-normalizes back to physical units.
pub fn rollout_states(
    model: &Model<f32>,
    norm: &NormStats,
    truth: &Trajectory,
    start: usize,
    n_steps: usize,
) -> Result<RolloutOutcome, PipelineError> {
    let (nx, ny) = (truth.nx(), truth.ny());
    let init = truth
        .states
        .get(start)
        .ok_or_else(|| PipelineError::Config(format!("start index {start} out of range")))?;
    let input =
        heap_tensor::Tensor::from_vec(&[1, 2, ny, nx], norm.state_to_f32(init));
    let emb0 = no_grad(|| model.encoder.encode(&input, Mode::Eval))?;

    let mut embs = Vec::with_capacity(n_steps);
    let mut diverged = None;
    {
        let mut cur = emb0;
        for step in 0..n_steps {
            let next = no_grad(|| model.predictor.step(&cur))?;
            if !next.levels.iter().all(|t| t.all_finite()) {
                diverged = Some(step + 1);
                break;
            }
            embs.push(next.clone());
            cur = next;
        }
    }
    let states = decode_states(model, &embs, norm, nx, ny)?;
    Ok(match diverged {
        Some(step) => RolloutOutcome::Diverged { states, step },
        None => RolloutOutcome::Complete(states),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use heap_solver::SolverParams;

    fn synthetic_states(n: usize, nx: usize, seed: u64) -> Vec<SystemState> {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha20Rng::seed_from_u64(seed);
        (0..n)
            .map(|t| {
                let phase = t as f64 * 0.2;
                let noise: f64 = rng.gen_range(-0.05..0.05);
                let f = Field2D::from_fn(nx, nx, |x, y| {
                    let k = 2.0 * std::f64::consts::PI / nx as f64;
                    (k * 2.0 * x as f64 + phase).sin() * (k * 3.0 * y as f64).cos() + noise
                });
                SystemState { n: f.clone(), phi: f }
            })
            .collect()
    }

    #[test]
    fn self_evaluation_is_all_zero() {
        let states = synthetic_states(24, 16, 1);
        let report = metrics_report(&states, &states).unwrap();
        assert_eq!(report.errors.spatial, [0.0, 0.0]);
        assert_eq!(report.errors.temporal, [0.0, 0.0]);
        assert_eq!(report.errors.autocorr, [0.0, 0.0]);
        assert_eq!(report.errors.extrema, 0.0);
        assert_eq!(report.errors.worst_primary(), 0.0);
    }

    #[test]
    fn report_is_complete() {
        let a = synthetic_states(20, 16, 2);
        let b = synthetic_states(20, 16, 3);
        let report = metrics_report(&a, &b).unwrap();
        for pair in report.spatial.iter().chain(&report.temporal).chain(&report.autocorr) {
            assert_eq!(pair.generated.len(), pair.truth.len());
            assert!(!pair.generated.is_empty());
        }
        assert!(report.errors.worst_primary() > 0.0);
        assert!(report.extrema_truth.mean_maxima >= 0.0);
    }

    #[test]
    fn mismatched_windows_rejected() {
        let a = synthetic_states(8, 8, 1);
        let b = synthetic_states(9, 8, 1);
        assert!(metrics_report(&a, &b).is_err());
    }

    #[test]
    fn trained_free_model_rollout_window_bounds() {
        // Bounds check only; statistical quality is covered by the
        // acceptance suite.
        let cfg = {
            let mut c = heap_models::ModelConfig::new(heap_models::Variant::H(1), 1);
            c.input_size = 16;
            c
        };
        let model = heap_models::build_model::<f32>(&cfg).unwrap();
        let states = synthetic_states(10, 16, 4);
        let traj = Trajectory {
            states,
            dt_output: 1.0,
            params: SolverParams { nx: 16, ny: 16, ..Default::default() },
        };
        let norm = NormStats::identity();
        assert!(evaluate_rollout(&model, &norm, &traj, 5, 10).is_err());
        let report = evaluate_rollout(&model, &norm, &traj, 5, 4).unwrap();
        assert!(report.rollout_secs >= 0.0);
    }
}
