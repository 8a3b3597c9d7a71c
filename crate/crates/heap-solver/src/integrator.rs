use crate::{hw_rhs, SolverError, SolverParams, Spectral, VorticityState};

fn advanced(base: &VorticityState, k: &[(f64, &crate::Tendency)], sp: &Spectral) -> VorticityState {
    let mut n = base.n.clone();
    let mut omega = base.omega.clone();
    for (c, t) in k {
        n.add_scaled(&t.dn, *c);
        omega.add_scaled(&t.domega, *c);
    }
    VorticityState::from_n_omega(n, omega, sp)
}

/// Classical fourth-order Runge-Kutta advance of `(n, omega)` by
/// `params.dt_internal`; `phi` is re-derived from `omega` after the step.
///
/// Stability is the caller's problem: a non-finite result is reported, not
/// prevented.
pub fn step_rk4(
    state: &VorticityState,
    params: &SolverParams,
    sp: &Spectral,
) -> Result<VorticityState, SolverError> {
    let dt = params.dt_internal;
    let k1 = hw_rhs(state, params, sp)?;
    let s2 = advanced(state, &[(0.5 * dt, &k1)], sp);
    let k2 = hw_rhs(&s2, params, sp)?;
    let s3 = advanced(state, &[(0.5 * dt, &k2)], sp);
    let k3 = hw_rhs(&s3, params, sp)?;
    let s4 = advanced(state, &[(dt, &k3)], sp);
    let k4 = hw_rhs(&s4, params, sp)?;

    let sixth = dt / 6.0;
    let next = advanced(
        state,
        &[(sixth, &k1), (2.0 * sixth, &k2), (2.0 * sixth, &k3), (sixth, &k4)],
        sp,
    );
    if !next.is_finite() {
        return Err(SolverError::NonFinite);
    }
    Ok(next)
}
