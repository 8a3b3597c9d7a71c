use crate::ModelError;

/// Tested architecture family: hierarchical models `H1..H5` and
/// fully-convolutional baselines `C1..C3`. `H1` and `C1` are the same
/// architecture by construction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Variant {
    H(u8),
    C(u8),
}

impl Variant {
    pub fn parse(s: &str) -> Result<Self, ModelError> {
        let err = || ModelError::Config(format!("unknown variant '{s}' (expected H1..H5 or C1..C3)"));
        let (kind, num) = s.split_at(1);
        let n: u8 = num.parse().map_err(|_| err())?;
        match kind {
            "H" | "h" if (1..=5).contains(&n) => Ok(Variant::H(n)),
            "C" | "c" if (1..=3).contains(&n) => Ok(Variant::C(n)),
            _ => Err(err()),
        }
    }

    /// Number of encoder stages (down-path convolutions).
    pub fn stages(self) -> usize {
        match self {
            Variant::H(k) | Variant::C(k) => k as usize,
        }
    }
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Variant::H(k) => write!(f, "H{k}"),
            Variant::C(k) => write!(f, "C{k}"),
        }
    }
}

/// Extent and channel count of one embedding level; `stage` is 1-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LevelSpec {
    pub stage: usize,
    pub channels: usize,
    pub size: usize,
}

/// Everything needed to build a model deterministically.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub variant: Variant,
    /// Embedding channels per hierarchical level (C-variants scale this by
    /// 4^(k-1) on their single level to keep total embedding units fixed).
    pub embed_channels: usize,
    /// Internal interaction blocks per predictor step (N).
    pub internal_steps: usize,
    /// Channel multiplier inside the predictor.
    pub expansion: usize,
    /// Inter-level terms in the predictor blocks; disabled for the ablation.
    pub interaction: bool,
    pub seed: u64,
    /// Square input extent the model is built for.
    pub input_size: usize,
    pub activation_slope: f64,
    /// Hidden widths of the encoder down path / decoder up path, per stage.
    pub down_widths: [usize; 5],
    pub lateral_kernel: usize,
    pub inter_kernel: usize,
    pub encoder_batch_norm: bool,
    pub predictor_layer_norm: bool,
}

impl ModelConfig {
    pub fn new(variant: Variant, seed: u64) -> Self {
        Self {
            variant,
            embed_channels: 8,
            internal_steps: 4,
            expansion: 4,
            interaction: true,
            seed,
            input_size: 128,
            activation_slope: 0.2,
            down_widths: [16, 32, 64, 128, 128],
            lateral_kernel: 3,
            inter_kernel: 4,
            encoder_batch_norm: true,
            predictor_layer_norm: true,
        }
    }

    pub fn stages(&self) -> usize {
        self.variant.stages()
    }

    /// Extent of the signal after `stage` stride-2 convolutions.
    pub fn stage_size(&self, stage: usize) -> usize {
        self.input_size >> stage
    }

    /// Extent of the embedding produced at `stage` (one more stride-2 conv).
    pub fn level_size(&self, stage: usize) -> usize {
        self.input_size >> (stage + 1)
    }

    /// The embedding levels this variant produces, finest first.
    pub fn level_specs(&self) -> Vec<LevelSpec> {
        let k = self.stages();
        match self.variant {
            Variant::H(_) => (1..=k)
                .map(|stage| LevelSpec {
                    stage,
                    channels: self.embed_channels,
                    size: self.level_size(stage),
                })
                .collect(),
            Variant::C(_) => vec![LevelSpec {
                stage: k,
                channels: self.embed_channels * 4usize.pow(k as u32 - 1),
                size: self.level_size(k),
            }],
        }
    }

    /// Total number of embedding units across levels, per sample.
    pub fn embedding_units(&self) -> usize {
        self.level_specs().iter().map(|l| l.channels * l.size * l.size).sum()
    }

    /// Down-path input width at `stage` (stage 1 consumes the two fields).
    pub fn stage_in_width(&self, stage: usize) -> usize {
        if stage == 1 {
            2
        } else {
            self.down_widths[stage - 2]
        }
    }

    pub fn stage_out_width(&self, stage: usize) -> usize {
        self.down_widths[stage - 1]
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let k = self.stages();
        if !self.input_size.is_power_of_two() {
            return Err(ModelError::Config(format!(
                "input_size must be a power of two, got {}",
                self.input_size
            )));
        }
        if self.input_size >> (k + 1) == 0 {
            return Err(ModelError::Config(format!(
                "input_size {} too small for {} stages",
                self.input_size, k
            )));
        }
        if self.embed_channels == 0 || self.internal_steps == 0 || self.expansion == 0 {
            return Err(ModelError::Config(
                "embed_channels, internal_steps and expansion must be >= 1".into(),
            ));
        }
        if self.lateral_kernel == 0 || self.inter_kernel < 2 {
            return Err(ModelError::Config("bad predictor kernel sizes".into()));
        }
        Ok(())
    }
}
