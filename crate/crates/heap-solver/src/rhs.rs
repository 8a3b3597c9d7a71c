use crate::{arakawa_bracket, Field2D, SolverError, SolverParams, Spectral, VorticityState};

/// Time derivatives of `(n, omega)`.
#[derive(Debug, Clone)]
pub struct Tendency {
    pub dn: Field2D,
    pub domega: Field2D,
}

/// Right-hand side of the dimensionless system:
///
/// ```text
/// dn/dt     = -{phi, n}     - kappa * dphi/dy + alpha * (phi - n) - d_n * lap^2 n
/// domega/dt = -{phi, omega}                   + alpha * (phi - n) - d_p * lap^2 omega
/// ```
///
/// Brackets are Arakawa in real space; `d/dy` and the biharmonic operators are
/// spectral. The hyper-diffusion acts on the evolved quantities themselves so
/// that both terms drain energy at small scales; applied to `phi` instead of
/// `omega` the sign flips and the term pumps enstrophy into the grid scale.
pub fn hw_rhs(
    state: &VorticityState,
    params: &SolverParams,
    sp: &Spectral,
) -> Result<Tendency, SolverError> {
    if !state.is_finite() {
        return Err(SolverError::NonFinite);
    }
    let dx = params.dx();

    let bracket_phi_n = arakawa_bracket(&state.phi, &state.n, dx)?;
    let bracket_phi_omega = arakawa_bracket(&state.phi, &state.omega, dx)?;

    let dphi_dy = sp.ddy_spec(&state.phi_spec);
    let hyper_omega = sp.biharmonic_spec(&state.omega_spec);
    let hyper_n = sp.biharmonic(&state.n);

    let nx = state.n.nx();
    let ny = state.n.ny();
    let mut dn = Field2D::zeros(nx, ny);
    let mut domega = Field2D::zeros(nx, ny);
    {
        let n = state.n.values();
        let phi = state.phi.values();
        let dnv = dn.values_mut();
        let dov = domega.values_mut();
        for i in 0..n.len() {
            let coupling = params.alpha * (phi[i] - n[i]);
            dnv[i] = -bracket_phi_n.values()[i] - params.kappa * dphi_dy.values()[i] + coupling
                - params.d_n * hyper_n.values()[i];
            dov[i] =
                -bracket_phi_omega.values()[i] + coupling - params.d_p * hyper_omega.values()[i];
        }
    }
    Ok(Tendency { dn, domega })
}
