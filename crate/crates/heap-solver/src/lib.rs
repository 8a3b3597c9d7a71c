//! Dimensionless Hasegawa-Wakatani turbulence solver.
//!
//! Integrates the coupled drift-wave system for density perturbation `n` and
//! vorticity `omega = laplacian(phi)` on a doubly periodic square grid:
//! Arakawa brackets for the advective nonlinearity, spectral differentiation
//! for everything else, classical RK4 in time.

mod arakawa;
mod field;
mod integrator;
mod params;
mod rhs;
mod simulate;
mod spectral;
mod state;

pub use arakawa::arakawa_bracket;
pub use field::Field2D;
pub use integrator::step_rk4;
pub use params::SolverParams;
pub use rhs::{hw_rhs, Tendency};
pub use simulate::{
    running_mean_drift, simulate, simulate_with, total_energy, BlowupReport, SimulationRun,
};
pub use spectral::Spectral;
pub use state::{SystemState, Trajectory, VorticityState};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum SolverError {
    #[error("grid dimensions must be powers of two, got {nx}x{ny}")]
    NonPowerOfTwoGrid { nx: usize, ny: usize },
    #[error("field dimensions mismatch: {0}x{1} vs {2}x{3}")]
    DimensionMismatch(usize, usize, usize, usize),
    #[error("invalid solver parameter: {0}")]
    InvalidParameter(String),
    #[error("non-finite values encountered in a field")]
    NonFinite,
    #[error("numerical blowup at internal step {step}")]
    Blowup { step: usize },
}
