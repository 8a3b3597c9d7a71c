//! Model zoo: hierarchical-embedding autoencoders (H1..H5), the
//! fully-convolutional baselines (C1..C3, where C1 == H1), and the
//! latent-space predictors that advance embeddings in time.

mod config;
mod decoder;
mod encoder;
pub mod layers;
mod predictor;

pub use config::{LevelSpec, ModelConfig, Variant};
pub use decoder::Decoder;
pub use encoder::Encoder;
pub use layers::Mode;
pub use predictor::Predictor;

use heap_tensor::{Parameter, Real, Tensor, TensorError};
use rand_chacha::ChaCha20Rng;
use rand_chacha::rand_core::SeedableRng;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("shape error: {0}")]
    Shape(String),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error("rollout diverged at step {step}")]
    Divergence { step: usize },
}

/// Ordered per-level latent tensors, finest level first. Level `i` of an Hk
/// model has shape `[b, 8, S_i, S_i]` with `S` halving per level.
#[derive(Clone)]
pub struct HierarchicalEmbedding<R: Real> {
    pub levels: Vec<Tensor<R>>,
}

impl<R: Real> HierarchicalEmbedding<R> {
    pub fn batch(&self) -> usize {
        self.levels.first().map(|t| t.shape()[0]).unwrap_or(0)
    }

    /// Per-sample unit count summed over levels.
    pub fn units_per_sample(&self) -> usize {
        self.levels.iter().map(|t| t.numel() / t.shape()[0]).sum()
    }
}

/// The full bundle for one variant: encoder, decoder and predictor built from
/// a single seeded stream, so identical configs reproduce identical weights.
pub struct Model<R: Real> {
    pub config: ModelConfig,
    pub encoder: Encoder<R>,
    pub decoder: Decoder<R>,
    pub predictor: Predictor<R>,
}

pub fn build_model<R: Real>(config: &ModelConfig) -> Result<Model<R>, ModelError> {
    config.validate()?;
    let mut rng = ChaCha20Rng::seed_from_u64(config.seed);
    let encoder = Encoder::build(config, &mut rng);
    let decoder = Decoder::build(config, &mut rng);
    let predictor = Predictor::build(config, &mut rng);
    Ok(Model { config: config.clone(), encoder, decoder, predictor })
}

impl<R: Real> Model<R> {
    /// Autoencoder parameters (encoder + decoder), construction order.
    pub fn ae_params(&self) -> Vec<Parameter<R>> {
        let mut out = Vec::new();
        self.encoder.collect_params(&mut out);
        self.decoder.collect_params(&mut out);
        out
    }

    pub fn predictor_params(&self) -> Vec<Parameter<R>> {
        let mut out = Vec::new();
        self.predictor.collect_params(&mut out);
        out
    }

    /// All trainable parameters.
    pub fn params(&self) -> Vec<Parameter<R>> {
        let mut out = self.ae_params();
        self.predictor.collect_params(&mut out);
        out
    }

    /// Non-trainable state (batch-norm running statistics).
    pub fn buffers(&self) -> Vec<(String, Tensor<R>)> {
        let mut out = Vec::new();
        self.encoder.collect_buffers(&mut out);
        self.decoder.collect_buffers(&mut out);
        out
    }
}
