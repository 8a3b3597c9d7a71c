use heap_tensor::{ops, Parameter, Real, Tensor};
use rand_chacha::ChaCha20Rng;

use crate::layers::{Conv2d, ConvT2d, LayerNorm2d};
use crate::{HierarchicalEmbedding, ModelConfig, ModelError};

struct Block<R: Real> {
    /// Flat periodic convolution per level.
    lateral: Vec<Conv2d<R>>,
    /// Stride-2 convolution pulling from the finer neighbor (levels 2..).
    down: Vec<Conv2d<R>>,
    /// Stride-2 transposed convolution pulling from the coarser neighbor
    /// (levels ..k-1).
    up: Vec<ConvT2d<R>>,
    norms: Vec<Option<LayerNorm2d<R>>>,
}

/// Advances a hierarchical embedding one output step. Channels are expanded
/// by `expansion`, run through `internal_steps` interaction blocks, then
/// compressed back. Each block sums a lateral convolution with stride-2
/// couplings to the neighboring levels, applies the activation, adds the
/// block input, and layer-normalizes. With one level this is a plain ResNet.
pub struct Predictor<R: Real> {
    expand: Vec<Conv2d<R>>,
    blocks: Vec<Block<R>>,
    compress: Vec<Conv2d<R>>,
    slope: f64,
    config: ModelConfig,
}

impl<R: Real> Predictor<R> {
    pub fn build(config: &ModelConfig, rng: &mut ChaCha20Rng) -> Self {
        let specs = config.level_specs();
        let slope = config.activation_slope;
        let lk = config.lateral_kernel;
        let ik = config.inter_kernel;
        let wide: Vec<usize> = specs.iter().map(|l| l.channels * config.expansion).collect();

        let expand: Vec<Conv2d<R>> = specs
            .iter()
            .zip(&wide)
            .map(|(l, &w)| Conv2d::new(&format!("prd.x{}", l.stage), rng, l.channels, w, lk, 1, slope))
            .collect();

        let mut blocks = Vec::with_capacity(config.internal_steps);
        for step in 1..=config.internal_steps {
            let mut lateral = Vec::new();
            let mut down = Vec::new();
            let mut up = Vec::new();
            let mut norms = Vec::new();
            for (i, l) in specs.iter().enumerate() {
                lateral.push(Conv2d::new(
                    &format!("prd.s{step}.lat{}", l.stage),
                    rng,
                    wide[i],
                    wide[i],
                    lk,
                    1,
                    slope,
                ));
                if config.interaction && i > 0 {
                    down.push(Conv2d::new(
                        &format!("prd.s{step}.dn{}", l.stage),
                        rng,
                        wide[i - 1],
                        wide[i],
                        ik,
                        2,
                        slope,
                    ));
                }
                if config.interaction && i + 1 < specs.len() {
                    up.push(ConvT2d::new(
                        &format!("prd.s{step}.up{}", l.stage),
                        rng,
                        wide[i + 1],
                        wide[i],
                        ik,
                        2,
                        slope,
                    ));
                }
                norms.push(
                    config
                        .predictor_layer_norm
                        .then(|| LayerNorm2d::new(&format!("prd.s{step}.ln{}", l.stage), wide[i], l.size)),
                );
            }
            blocks.push(Block { lateral, down, up, norms });
        }

        let compress: Vec<Conv2d<R>> = specs
            .iter()
            .zip(&wide)
            .map(|(l, &w)| Conv2d::new(&format!("prd.c{}", l.stage), rng, w, l.channels, lk, 1, slope))
            .collect();

        Self { expand, blocks, compress, slope, config: config.clone() }
    }

    pub fn step(&self, emb: &HierarchicalEmbedding<R>) -> Result<HierarchicalEmbedding<R>, ModelError> {
        let specs = self.config.level_specs();
        if emb.levels.len() != specs.len() {
            return Err(ModelError::Shape(format!(
                "predictor expects {} levels, got {}",
                specs.len(),
                emb.levels.len()
            )));
        }

        let mut h: Vec<Tensor<R>> = Vec::with_capacity(specs.len());
        for (level, conv) in emb.levels.iter().zip(&self.expand) {
            h.push(ops::leaky_relu(&conv.forward(level)?, self.slope));
        }

        for block in &self.blocks {
            let mut next = Vec::with_capacity(h.len());
            let mut down_iter = block.down.iter();
            let mut up_iter = block.up.iter();
            // Consume neighbor convs in level order; they exist only when the
            // neighbor does and interactions are on.
            for (i, cur) in h.iter().enumerate() {
                let mut z = block.lateral[i].forward(cur)?;
                if self.config.interaction && i > 0 {
                    let dn = down_iter.next().expect("down conv per inner level");
                    z = ops::add(&z, &dn.forward(&h[i - 1])?);
                }
                if self.config.interaction && i + 1 < h.len() {
                    let up = up_iter.next().expect("up conv per inner level");
                    z = ops::add(&z, &up.forward(&h[i + 1])?);
                }
                let mut out = ops::add(&ops::leaky_relu(&z, self.slope), cur);
                if let Some(ln) = &block.norms[i] {
                    out = ln.forward(&out)?;
                }
                next.push(out);
            }
            h = next;
        }

        let mut levels = Vec::with_capacity(h.len());
        for (cur, conv) in h.iter().zip(&self.compress) {
            levels.push(conv.forward(cur)?);
        }
        Ok(HierarchicalEmbedding { levels })
    }

    /// Autoregressive application of `step`; embeddings stay in latent space
    /// for the whole rollout. Returns the `n_steps` predicted embeddings.
    pub fn rollout(
        &self,
        emb0: &HierarchicalEmbedding<R>,
        n_steps: usize,
    ) -> Result<Vec<HierarchicalEmbedding<R>>, ModelError> {
        if n_steps == 0 {
            return Err(ModelError::Config("rollout needs n_steps >= 1".into()));
        }
        let mut out = Vec::with_capacity(n_steps);
        let mut cur = emb0.clone();
        for step_idx in 0..n_steps {
            cur = self.step(&cur)?;
            if !cur.levels.iter().all(|t| t.all_finite()) {
                return Err(ModelError::Divergence { step: step_idx + 1 });
            }
            out.push(cur.clone());
        }
        Ok(out)
    }

    pub fn collect_params(&self, out: &mut Vec<Parameter<R>>) {
        for c in &self.expand {
            c.collect(out);
        }
        for b in &self.blocks {
            for c in &b.lateral {
                c.collect(out);
            }
            for c in &b.down {
                c.collect(out);
            }
            for c in &b.up {
                c.collect(out);
            }
            for n in b.norms.iter().flatten() {
                n.collect(out);
            }
        }
        for c in &self.compress {
            c.collect(out);
        }
    }
}
