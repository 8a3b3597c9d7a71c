use rustfft::num_complex::Complex;

use crate::{Field2D, SolverParams, Spectral};

/// The `(n, phi)` pair at one output step: the unit of dataset storage.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemState {
    pub n: Field2D,
    pub phi: Field2D,
}

/// Full solver state: `phi` is always the zero-mean Poisson inversion of
/// `omega`, and the spectrum of `phi` is kept alongside since every
/// right-hand-side evaluation needs it.
#[derive(Debug, Clone)]
pub struct VorticityState {
    pub n: Field2D,
    pub omega: Field2D,
    pub phi: Field2D,
    pub(crate) omega_spec: Vec<Complex<f64>>,
    pub(crate) phi_spec: Vec<Complex<f64>>,
}

impl VorticityState {
    /// Derives `phi` from `omega` and assembles a consistent state.
    pub fn from_n_omega(n: Field2D, omega: Field2D, sp: &Spectral) -> Self {
        let omega_spec = sp.forward(&omega);
        let phi_spec = sp.poisson_spec(&omega_spec);
        let phi = sp.inverse(phi_spec.clone());
        Self { n, omega, phi, omega_spec, phi_spec }
    }

    pub fn is_finite(&self) -> bool {
        self.n.is_finite() && self.omega.is_finite()
    }

    pub fn to_system_state(&self) -> SystemState {
        SystemState { n: self.n.clone(), phi: self.phi.clone() }
    }
}

/// An ordered sequence of stored output states, `dt_output` apart in time.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub states: Vec<SystemState>,
    pub dt_output: f64,
    pub params: SolverParams,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn nx(&self) -> usize {
        self.params.nx
    }

    pub fn ny(&self) -> usize {
        self.params.ny
    }
}
