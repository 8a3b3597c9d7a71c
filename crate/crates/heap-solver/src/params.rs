use crate::SolverError;

/// Default box edge length in units of the drift scale: `2*pi / 0.15`.
///
/// This is a conventional benchmark box for the dimensionless system; the
/// smallest resolved wavenumber is then 0.15, which sits below the drift-wave
/// instability peak so the energy-containing scales fit in the domain.
pub const DEFAULT_BOX_LENGTH: f64 = 2.0 * std::f64::consts::PI / 0.15;

/// Physical and numerical parameters of one simulation.
#[derive(Debug, Clone, PartialEq)]
pub struct SolverParams {
    /// Adiabaticity: coupling of `n` and `phi` along the field line.
    pub alpha: f64,
    /// Background density-gradient drive; positive values destabilize.
    pub kappa: f64,
    /// Hyper-diffusivity acting on `n`.
    pub d_n: f64,
    /// Hyper-diffusivity acting on `phi`.
    pub d_p: f64,
    pub nx: usize,
    pub ny: usize,
    /// Domain edge length (same in both axes).
    pub box_length: f64,
    /// Internal RK4 time step.
    pub dt_internal: f64,
    /// Internal steps per stored output; output interval is
    /// `dt_internal * output_stride`.
    pub output_stride: usize,
    /// Seed for the initial density perturbation.
    pub seed: u64,
}

impl Default for SolverParams {
    fn default() -> Self {
        Self {
            alpha: 0.01,
            kappa: 0.5,
            d_n: 1e-4,
            d_p: 1e-4,
            nx: 128,
            ny: 128,
            box_length: DEFAULT_BOX_LENGTH,
            dt_internal: 0.01,
            output_stride: 100,
            seed: 0,
        }
    }
}

impl SolverParams {
    pub fn dt_output(&self) -> f64 {
        self.dt_internal * self.output_stride as f64
    }

    /// Grid spacing (square cells).
    pub fn dx(&self) -> f64 {
        self.box_length / self.nx as f64
    }

    pub fn validate(&self) -> Result<(), SolverError> {
        if !self.nx.is_power_of_two() || !self.ny.is_power_of_two() {
            return Err(SolverError::NonPowerOfTwoGrid { nx: self.nx, ny: self.ny });
        }
        if self.alpha <= 0.0 {
            return Err(SolverError::InvalidParameter(format!(
                "alpha must be > 0, got {}",
                self.alpha
            )));
        }
        if self.kappa < 0.0 {
            return Err(SolverError::InvalidParameter(format!(
                "kappa must be >= 0, got {}",
                self.kappa
            )));
        }
        if self.d_n < 0.0 || self.d_p < 0.0 {
            return Err(SolverError::InvalidParameter(
                "hyper-diffusivities must be >= 0".into(),
            ));
        }
        if self.box_length <= 0.0 {
            return Err(SolverError::InvalidParameter("box_length must be > 0".into()));
        }
        if self.dt_internal <= 0.0 {
            return Err(SolverError::InvalidParameter("dt_internal must be > 0".into()));
        }
        if self.output_stride == 0 {
            return Err(SolverError::InvalidParameter("output_stride must be >= 1".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        assert!(SolverParams::default().validate().is_ok());
        assert_eq!(SolverParams::default().dt_output(), 1.0);
    }

    #[test]
    fn rejects_non_power_of_two() {
        let p = SolverParams { nx: 100, ..Default::default() };
        assert!(matches!(p.validate(), Err(SolverError::NonPowerOfTwoGrid { .. })));
    }

    #[test]
    fn rejects_zero_alpha() {
        let p = SolverParams { alpha: 0.0, ..Default::default() };
        assert!(p.validate().is_err());
    }
}
