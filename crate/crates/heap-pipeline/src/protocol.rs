use crate::PipelineError;

/// Experiment scale. `Paper` is the full protocol; `Desk` is the
/// proportionally reduced protocol used by the acceptance runs; `Micro` is a
/// minutes-long smoke preset for pipeline exercises, not for results.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scale {
    Micro,
    Desk,
    Paper,
}

impl Scale {
    pub fn parse(s: &str) -> Result<Self, PipelineError> {
        match s {
            "micro" => Ok(Scale::Micro),
            "desk" => Ok(Scale::Desk),
            "paper" => Ok(Scale::Paper),
            other => Err(PipelineError::Config(format!(
                "unknown scale '{other}' (expected micro, desk or paper)"
            ))),
        }
    }

    pub fn params(self) -> ProtocolParams {
        match self {
            Scale::Micro => ProtocolParams {
                nx: 32,
                n_outputs: 60,
                transient_cutoff: 4,
                ae_train: 40,
                ae_dev: 10,
                pair_train: 40,
                pair_dev: 10,
                rollout_steps: 8,
            },
            // 1200 outputs at 64^2; the turbulence saturates near output
            // ~320, so the cutoff absorbs the growth phase and the splits
            // use everything after it: 200 + 900 + 100 = 1200.
            Scale::Desk => ProtocolParams {
                nx: 64,
                n_outputs: 1200,
                transient_cutoff: 200,
                ae_train: 900,
                ae_dev: 100,
                pair_train: 900,
                pair_dev: 99,
                rollout_steps: 500,
            },
            Scale::Paper => ProtocolParams {
                nx: 128,
                n_outputs: 4800,
                transient_cutoff: 500,
                ae_train: 4000,
                ae_dev: 300,
                pair_train: 4000,
                pair_dev: 299,
                rollout_steps: 3000,
            },
        }
    }
}

impl std::fmt::Display for Scale {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Scale::Micro => write!(f, "micro"),
            Scale::Desk => write!(f, "desk"),
            Scale::Paper => write!(f, "paper"),
        }
    }
}

/// Counts pinned by the data protocol at a given scale.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ProtocolParams {
    pub nx: usize,
    pub n_outputs: usize,
    /// Outputs before this index are growth/transition and never used.
    pub transient_cutoff: usize,
    pub ae_train: usize,
    pub ae_dev: usize,
    /// Consecutive-pair start indices for predictor training.
    pub pair_train: usize,
    pub pair_dev: usize,
    pub rollout_steps: usize,
}

impl ProtocolParams {
    pub fn validate_for(&self, traj_len: usize) -> Result<(), PipelineError> {
        let avail = traj_len.saturating_sub(self.transient_cutoff);
        if avail < self.ae_train + self.ae_dev {
            return Err(PipelineError::Config(format!(
                "trajectory too short: {avail} non-transient steps < {} train + {} dev",
                self.ae_train, self.ae_dev
            )));
        }
        let pair_avail = traj_len.saturating_sub(self.transient_cutoff + 1);
        if pair_avail < self.pair_train + self.pair_dev {
            return Err(PipelineError::Config(format!(
                "trajectory too short for pairs: {pair_avail} < {} + {}",
                self.pair_train, self.pair_dev
            )));
        }
        Ok(())
    }
}
