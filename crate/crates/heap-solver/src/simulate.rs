use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::{
    step_rk4, Field2D, SolverError, SolverParams, Spectral, SystemState, Trajectory, VorticityState,
};

/// Where a run blew up, if it did.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BlowupReport {
    /// Internal RK4 step index at which non-finite values appeared.
    pub internal_step: usize,
    /// Index of the last stored output that is still finite.
    pub last_valid_output: usize,
}

/// Result of a simulation: always carries whatever outputs were produced;
/// `blowup` is set when integration failed before completing.
#[derive(Debug, Clone)]
pub struct SimulationRun {
    pub trajectory: Trajectory,
    pub blowup: Option<BlowupReport>,
}

/// Seeded white-noise density perturbation, uniform in `[-amp, amp]` per grid
/// point with the sample mean removed, so every Fourier mode starts with the
/// same expected power.
fn initial_density(params: &SolverParams) -> Field2D {
    const AMP: f64 = 1e-3;
    let mut rng = ChaCha20Rng::seed_from_u64(params.seed);
    let mut f = Field2D::from_fn(params.nx, params.ny, |_, _| rng.gen_range(-AMP..AMP));
    let m = f.mean();
    for v in f.values_mut() {
        *v -= m;
    }
    f
}

/// Volume-averaged total energy `<n^2 + |grad phi|^2> / 2`.
pub fn total_energy(state: &VorticityState, sp: &Spectral) -> f64 {
    let gx = sp.ddx_spec(&state.phi_spec);
    let gy = sp.ddy_spec(&state.phi_spec);
    let n = state.n.values();
    let sum: f64 = n
        .iter()
        .zip(gx.values())
        .zip(gy.values())
        .map(|((&n, &gx), &gy)| n * n + gx * gx + gy * gy)
        .sum();
    0.5 * sum / n.len() as f64
}

/// Systematic drift of the `window`-point running mean of `series`: the
/// total change of a least-squares linear fit to the running means, relative
/// to their mean. A statistically steady signal gives a value near zero even
/// though turbulent fluctuations make the running mean wander; a residual
/// trend (still growing, or decaying) shows up directly.
pub fn running_mean_drift(series: &[f64], window: usize) -> f64 {
    assert!(window >= 1 && series.len() >= window, "series shorter than window");
    let mut means = Vec::with_capacity(series.len() - window + 1);
    let mut acc: f64 = series[..window].iter().sum();
    means.push(acc / window as f64);
    for i in window..series.len() {
        acc += series[i] - series[i - window];
        means.push(acc / window as f64);
    }
    let n = means.len() as f64;
    if means.len() < 2 {
        return 0.0;
    }
    let sx = (n - 1.0) * n / 2.0;
    let sxx = (n - 1.0) * n * (2.0 * n - 1.0) / 6.0;
    let sy: f64 = means.iter().sum();
    let sxy: f64 = means.iter().enumerate().map(|(i, &m)| i as f64 * m).sum();
    let slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    let mean = sy / n;
    (slope * (n - 1.0)).abs() / mean.abs().max(f64::MIN_POSITIVE)
}

/// Runs the solver, handing every stored output (including the initial state)
/// to `on_output`. Deterministic for fixed `(params, seed)`.
pub fn simulate_with(
    params: &SolverParams,
    n_outputs: usize,
    mut on_output: impl FnMut(usize, &VorticityState),
) -> Result<Option<BlowupReport>, SolverError> {
    params.validate()?;
    if n_outputs == 0 {
        return Err(SolverError::InvalidParameter("n_outputs must be >= 1".into()));
    }
    let sp = Spectral::new(params.nx, params.ny, params.box_length)?;
    let mut state = VorticityState::from_n_omega(
        initial_density(params),
        Field2D::zeros(params.nx, params.ny),
        &sp,
    );
    on_output(0, &state);

    let mut internal_step = 0usize;
    for out_idx in 1..n_outputs {
        for _ in 0..params.output_stride {
            internal_step += 1;
            state = match step_rk4(&state, params, &sp) {
                Ok(s) => s,
                Err(SolverError::NonFinite) => {
                    return Ok(Some(BlowupReport {
                        internal_step,
                        last_valid_output: out_idx - 1,
                    }));
                }
                Err(e) => return Err(e),
            };
        }
        on_output(out_idx, &state);
    }
    Ok(None)
}

/// Runs the solver and collects the stored outputs into a [`Trajectory`].
/// On blowup the partial trajectory is returned together with the report.
pub fn simulate(params: &SolverParams, n_outputs: usize) -> Result<SimulationRun, SolverError> {
    let mut states: Vec<SystemState> = Vec::with_capacity(n_outputs);
    let blowup = simulate_with(params, n_outputs, |_, s| states.push(s.to_system_state()))?;
    Ok(SimulationRun {
        trajectory: Trajectory { states, dt_output: params.dt_output(), params: params.clone() },
        blowup,
    })
}
