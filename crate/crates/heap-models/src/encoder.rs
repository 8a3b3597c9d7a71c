use heap_tensor::{ops, Parameter, Real, Tensor};
use rand_chacha::ChaCha20Rng;

use crate::layers::{BatchNorm2d, Conv2d, Mode};
use crate::{HierarchicalEmbedding, ModelConfig, ModelError, Variant};

struct DownStage<R: Real> {
    conv: Conv2d<R>,
    bn: Option<BatchNorm2d<R>>,
}

/// Down path of stride-2 4x4 convolutions; at each embedding level an extra
/// stride-2 "output" convolution diverts that level's embedding. The output
/// convolutions are linear read-outs (no normalization, no activation) so the
/// latent space is unconstrained.
pub struct Encoder<R: Real> {
    down: Vec<DownStage<R>>,
    /// `(stage, conv)` for each embedding level, finest first.
    outputs: Vec<(usize, Conv2d<R>)>,
    slope: f64,
    config: ModelConfig,
}

impl<R: Real> Encoder<R> {
    pub fn build(config: &ModelConfig, rng: &mut ChaCha20Rng) -> Self {
        let k = config.stages();
        let slope = config.activation_slope;
        let mut down = Vec::with_capacity(k);
        let mut outputs = Vec::new();
        for stage in 1..=k {
            let conv = Conv2d::new(
                &format!("enc.d{stage}"),
                rng,
                config.stage_in_width(stage),
                config.stage_out_width(stage),
                4,
                2,
                slope,
            );
            let bn = config
                .encoder_batch_norm
                .then(|| BatchNorm2d::new(&format!("enc.d{stage}.bn"), config.stage_out_width(stage)));
            down.push(DownStage { conv, bn });
            let emits_here = match config.variant {
                Variant::H(_) => true,
                Variant::C(_) => stage == k,
            };
            if emits_here {
                let channels = config
                    .level_specs()
                    .iter()
                    .find(|l| l.stage == stage)
                    .expect("level spec for emitting stage")
                    .channels;
                outputs.push((
                    stage,
                    Conv2d::new(
                        &format!("enc.o{stage}"),
                        rng,
                        config.stage_out_width(stage),
                        channels,
                        4,
                        2,
                        slope,
                    ),
                ));
            }
        }
        Self { down, outputs, slope, config: config.clone() }
    }

    pub fn encode(&self, x: &Tensor<R>, mode: Mode) -> Result<HierarchicalEmbedding<R>, ModelError> {
        let shape = x.shape();
        let s = self.config.input_size;
        if shape.len() != 4 || shape[1] != 2 || shape[2] != s || shape[3] != s {
            return Err(ModelError::Shape(format!(
                "encoder expects [b, 2, {s}, {s}], got {shape:?}"
            )));
        }
        let mut levels = Vec::with_capacity(self.outputs.len());
        let mut h = x.clone();
        let mut out_iter = self.outputs.iter().peekable();
        for (idx, stage) in self.down.iter().enumerate() {
            h = stage.conv.forward(&h)?;
            if let Some(bn) = &stage.bn {
                h = bn.forward(&h, mode)?;
            }
            h = ops::leaky_relu(&h, self.slope);
            if let Some((st, conv)) = out_iter.peek() {
                if *st == idx + 1 {
                    levels.push(conv.forward(&h)?);
                    out_iter.next();
                }
            }
        }
        Ok(HierarchicalEmbedding { levels })
    }

    pub fn collect_params(&self, out: &mut Vec<Parameter<R>>) {
        for stage in &self.down {
            stage.conv.collect(out);
            if let Some(bn) = &stage.bn {
                bn.collect(out);
            }
        }
        for (_, conv) in &self.outputs {
            conv.collect(out);
        }
    }

    pub fn collect_buffers(&self, out: &mut Vec<(String, Tensor<R>)>) {
        for stage in &self.down {
            if let Some(bn) = &stage.bn {
                bn.buffers(out);
            }
        }
    }
}
