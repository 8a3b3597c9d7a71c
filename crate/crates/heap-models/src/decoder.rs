use heap_tensor::{ops, Parameter, Real, Tensor};
use rand_chacha::ChaCha20Rng;

use crate::layers::{BatchNorm2d, ConvT2d, Mode};
use crate::{HierarchicalEmbedding, ModelConfig, ModelError};

/// Mirror of the encoder: each level's embedding enters through a stride-2
/// transposed convolution and is summed with the up-sampled signal from
/// deeper stages; the final up-convolution back to the two physical fields is
/// linear.
pub struct Decoder<R: Real> {
    /// `(stage, conv)` embedding entry points, finest first.
    inputs: Vec<(usize, ConvT2d<R>)>,
    /// Up-path convolutions, one per stage (stage 1 produces the output).
    up: Vec<ConvT2d<R>>,
    /// Post-fusion normalization per stage (stages 2..=k have activations).
    norms: Vec<Option<BatchNorm2d<R>>>,
    slope: f64,
    config: ModelConfig,
}

impl<R: Real> Decoder<R> {
    pub fn build(config: &ModelConfig, rng: &mut ChaCha20Rng) -> Self {
        let k = config.stages();
        let slope = config.activation_slope;
        let mut inputs = Vec::new();
        let mut up = Vec::with_capacity(k);
        let mut norms = Vec::with_capacity(k);
        for stage in 1..=k {
            if let Some(level) = config.level_specs().iter().find(|l| l.stage == stage) {
                inputs.push((
                    stage,
                    ConvT2d::new(
                        &format!("dec.i{stage}"),
                        rng,
                        level.channels,
                        config.stage_out_width(stage),
                        4,
                        2,
                        slope,
                    ),
                ));
            }
            let out_w = if stage == 1 { 2 } else { config.stage_out_width(stage - 1) };
            up.push(ConvT2d::new(
                &format!("dec.u{stage}"),
                rng,
                config.stage_out_width(stage),
                out_w,
                4,
                2,
                slope,
            ));
            norms.push(
                config
                    .encoder_batch_norm
                    .then(|| BatchNorm2d::new(&format!("dec.n{stage}"), config.stage_out_width(stage))),
            );
        }
        Self { inputs, up, norms, slope, config: config.clone() }
    }

    fn run(
        &self,
        emb: &HierarchicalEmbedding<R>,
        keep_only: Option<usize>,
        mode: Mode,
    ) -> Result<Tensor<R>, ModelError> {
        let specs = self.config.level_specs();
        if emb.levels.len() != specs.len() {
            return Err(ModelError::Shape(format!(
                "decoder expects {} levels, got {}",
                specs.len(),
                emb.levels.len()
            )));
        }
        for (t, spec) in emb.levels.iter().zip(&specs) {
            let sh = t.shape();
            if sh.len() != 4 || sh[1] != spec.channels || sh[2] != spec.size || sh[3] != spec.size {
                return Err(ModelError::Shape(format!(
                    "level at stage {} has shape {sh:?}, expected [b, {}, {}, {}]",
                    spec.stage, spec.channels, spec.size, spec.size
                )));
            }
        }

        let k = self.config.stages();
        let mut h: Option<Tensor<R>> = None;
        for stage in (1..=k).rev() {
            let mut signal: Option<Tensor<R>> = None;
            if let Some(pos) = self.inputs.iter().position(|(st, _)| *st == stage) {
                let level_tensor = &emb.levels[pos];
                let zeroed = matches!(keep_only, Some(keep) if keep != stage);
                let fed = if zeroed {
                    Tensor::zeros(level_tensor.shape())
                } else {
                    level_tensor.clone()
                };
                signal = Some(self.inputs[pos].1.forward(&fed)?);
            }
            if let Some(deeper) = h {
                // Deeper signal arrives through this stage + 1's up-conv.
                let upsampled = self.up[stage].forward(&deeper)?;
                signal = Some(match signal {
                    Some(s) => ops::add(&s, &upsampled),
                    None => upsampled,
                });
            }
            let mut s = signal.expect("every stage receives a signal");
            if let Some(bn) = &self.norms[stage - 1] {
                s = bn.forward(&s, mode)?;
            }
            h = Some(ops::leaky_relu(&s, self.slope));
        }
        self.up[0].forward(&h.expect("at least one stage"))
    }

    pub fn decode(&self, emb: &HierarchicalEmbedding<R>, mode: Mode) -> Result<Tensor<R>, ModelError> {
        self.run(emb, None, mode)
    }

    /// Decodes with every level except `stage` zeroed: the multi-scale view.
    /// The result is not a partition of the full reconstruction; nonlinear
    /// stages mix contributions.
    pub fn decode_single_level(
        &self,
        emb: &HierarchicalEmbedding<R>,
        stage: usize,
        mode: Mode,
    ) -> Result<Tensor<R>, ModelError> {
        if !self.inputs.iter().any(|(st, _)| *st == stage) {
            return Err(ModelError::Config(format!("no embedding level at stage {stage}")));
        }
        self.run(emb, Some(stage), mode)
    }

    pub fn collect_params(&self, out: &mut Vec<Parameter<R>>) {
        for (_, conv) in &self.inputs {
            conv.collect(out);
        }
        for conv in &self.up {
            conv.collect(out);
        }
        for bn in self.norms.iter().flatten() {
            bn.collect(out);
        }
    }

    pub fn collect_buffers(&self, out: &mut Vec<(String, Tensor<R>)>) {
        for bn in self.norms.iter().flatten() {
            bn.buffers(out);
        }
    }
}
