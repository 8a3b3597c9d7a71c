//! Two-stage training: the autoencoder first, then the predictor on frozen
//! embeddings. Dev sets steer early stopping and the plateau schedule only;
//! no gradient ever sees them.

use heap_models::{build_model, Mode, Model, ModelConfig};
use heap_tensor::{backward, no_grad, ops, zero_grads, Adam, Parameter, Tensor};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use heap_solver::Trajectory;

use crate::persist::EmbeddingStore;
use crate::{DatasetSplit, NormStats, PipelineError};

#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub lr: f64,
    pub max_epochs: usize,
    /// Epochs without dev improvement before stopping.
    pub early_stop_patience: usize,
    /// Epochs without dev improvement before halving the learning rate.
    pub plateau_patience: usize,
    pub lr_decay: f64,
    pub min_lr: f64,
}

impl TrainConfig {
    pub fn autoencoder() -> Self {
        Self {
            batch_size: 32,
            lr: 1e-3,
            max_epochs: 500,
            early_stop_patience: 20,
            plateau_patience: 10,
            lr_decay: 0.5,
            min_lr: 1e-6,
        }
    }

    /// Predictor defaults: same optimizer, lr 3e-4, halved for the deeper
    /// baselines C2/C3 which train less stably.
    pub fn predictor(variant: heap_models::Variant) -> Self {
        let lr = match variant {
            heap_models::Variant::C(k) if k >= 2 => 1.5e-4,
            _ => 3e-4,
        };
        Self { lr, ..Self::autoencoder() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub dev_loss: f64,
    pub lr: f64,
}

#[derive(Debug, Clone, Default)]
pub struct History {
    pub epochs: Vec<EpochStats>,
    /// 1-based epoch whose dev loss was best (0 when nothing ran).
    pub best_epoch: usize,
    pub best_dev_loss: f64,
    /// Dev loss never improved on epoch 1: the run is flagged, artifacts are
    /// still emitted.
    pub failed: bool,
    /// Training loss went non-finite at this epoch and the run was aborted.
    pub diverged_at: Option<usize>,
}

impl History {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,train_loss,dev_loss,lr\n");
        for e in &self.epochs {
            out.push_str(&format!("{},{:.9e},{:.9e},{:.3e}\n", e.epoch, e.train_loss, e.dev_loss, e.lr));
        }
        if self.failed {
            out.push_str("# flagged: dev loss never improved on epoch 1\n");
        }
        if let Some(ep) = self.diverged_at {
            out.push_str(&format!("# diverged at epoch {ep}\n"));
        }
        out
    }
}

/// Parameter/buffer snapshot for best-epoch restoration.
struct Snapshot {
    params: Vec<Vec<f32>>,
    buffers: Vec<Vec<f32>>,
}

fn take_snapshot(params: &[Parameter<f32>], buffers: &[(String, Tensor<f32>)]) -> Snapshot {
    Snapshot {
        params: params.iter().map(|p| p.tensor.to_vec()).collect(),
        buffers: buffers.iter().map(|(_, t)| t.to_vec()).collect(),
    }
}

fn restore_snapshot(snap: &Snapshot, params: &[Parameter<f32>], buffers: &[(String, Tensor<f32>)]) {
    for (p, saved) in params.iter().zip(&snap.params) {
        p.tensor.values_mut().copy_from_slice(saved);
    }
    for ((_, t), saved) in buffers.iter().zip(&snap.buffers) {
        t.values_mut().copy_from_slice(saved);
    }
}

/// Shuffled batches; batches of one sample are dropped (batch norm contract).
fn epoch_batches(indices: &[usize], batch_size: usize, seed: u64, epoch: usize) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = indices.to_vec();
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(epoch as u64 + 1);
    order.shuffle(&mut rng);
    order
        .chunks(batch_size)
        .filter(|c| c.len() >= 2)
        .map(|c| c.to_vec())
        .collect()
}

fn ae_batch(traj: &Trajectory, idxs: &[usize], norm: &NormStats) -> Tensor<f32> {
    let (nx, ny) = (traj.nx(), traj.ny());
    let mut values = Vec::with_capacity(idxs.len() * 2 * nx * ny);
    for &i in idxs {
        values.extend(norm.state_to_f32(&traj.states[i]));
    }
    Tensor::from_vec(&[idxs.len(), 2, ny, nx], values)
}

/// Generic epoch driver shared by both stages.
struct Driver<'a> {
    cfg: &'a TrainConfig,
    params: Vec<Parameter<f32>>,
    buffers: Vec<(String, Tensor<f32>)>,
    opt: Adam<f32>,
    history: History,
    best: Option<Snapshot>,
    best_dev: f64,
    stale: usize,
    plateau: usize,
}

impl<'a> Driver<'a> {
    fn new(cfg: &'a TrainConfig, params: Vec<Parameter<f32>>, buffers: Vec<(String, Tensor<f32>)>) -> Self {
        let opt = Adam::new(&params, cfg.lr);
        Self {
            cfg,
            params,
            buffers,
            opt,
            history: History::default(),
            best: None,
            best_dev: f64::INFINITY,
            stale: 0,
            plateau: 0,
        }
    }

    /// Records an epoch; returns false when training should stop.
    fn observe(&mut self, epoch: usize, train_loss: f64, dev_loss: f64) -> bool {
        self.history.epochs.push(EpochStats { epoch, train_loss, dev_loss, lr: self.opt.lr() });
        if !train_loss.is_finite() || !dev_loss.is_finite() {
            self.history.diverged_at = Some(epoch);
            return false;
        }
        if dev_loss < self.best_dev {
            self.best_dev = dev_loss;
            self.history.best_epoch = epoch;
            self.history.best_dev_loss = dev_loss;
            self.best = Some(take_snapshot(&self.params, &self.buffers));
            self.stale = 0;
            self.plateau = 0;
        } else {
            self.stale += 1;
            self.plateau += 1;
        }
        if self.stale >= self.cfg.early_stop_patience {
            return false;
        }
        if self.plateau >= self.cfg.plateau_patience {
            let lr = (self.opt.lr() * self.cfg.lr_decay).max(self.cfg.min_lr);
            self.opt.set_lr(lr);
            self.plateau = 0;
        }
        true
    }

    fn step_opt(&mut self) {
        self.opt.step(&self.params);
        zero_grads(&self.params);
    }

    fn finish(mut self) -> History {
        if let Some(snap) = &self.best {
            restore_snapshot(snap, &self.params, &self.buffers);
        }
        self.history.failed = self.history.epochs.len() > 1 && self.history.best_epoch <= 1;
        self.history
    }
}

/// Trains the autoencoder stage: minimizes reconstruction MSE on normalized
/// `(n, phi)` states, early-stops on the dev split, returns the model
/// restored to its best-dev weights.
pub fn train_autoencoder(
    traj: &Trajectory,
    split: &DatasetSplit,
    model_cfg: &ModelConfig,
    cfg: &TrainConfig,
) -> Result<(Model<f32>, NormStats, History), PipelineError> {
    let norm = NormStats::compute(traj, &split.ae_train)?;
    let model = build_model::<f32>(model_cfg)?;
    let mut driver = Driver::new(cfg, model.ae_params(), model.buffers());

    for epoch in 1..=cfg.max_epochs {
        let mut train_loss = 0.0;
        let mut seen = 0usize;
        let mut diverged = false;
        for batch in epoch_batches(&split.ae_train, cfg.batch_size, model_cfg.seed, epoch) {
            let input = ae_batch(traj, &batch, &norm);
            let emb = model.encoder.encode(&input, Mode::Train)?;
            let recon = model.decoder.decode(&emb, Mode::Train)?;
            let loss = ops::mse_loss(&recon, &input);
            let lv = loss.item() as f64;
            if !lv.is_finite() {
                diverged = true;
                break;
            }
            backward(&loss);
            driver.step_opt();
            train_loss += lv * batch.len() as f64;
            seen += batch.len();
        }
        let train_loss = if diverged { f64::NAN } else { train_loss / seen.max(1) as f64 };

        let dev_loss = if diverged {
            f64::NAN
        } else {
            ae_eval_loss(&model, traj, &split.ae_dev, &norm, cfg.batch_size)?
        };
        if !driver.observe(epoch, train_loss, dev_loss) {
            break;
        }
    }
    let history = driver.finish();
    Ok((model, norm, history))
}

fn ae_eval_loss(
    model: &Model<f32>,
    traj: &Trajectory,
    dev: &[usize],
    norm: &NormStats,
    batch_size: usize,
) -> Result<f64, PipelineError> {
    let mut total = 0.0;
    let mut seen = 0usize;
    for chunk in dev.chunks(batch_size) {
        let input = ae_batch(traj, chunk, norm);
        let loss = no_grad(|| -> Result<f64, PipelineError> {
            let emb = model.encoder.encode(&input, Mode::Eval)?;
            let recon = model.decoder.decode(&emb, Mode::Eval)?;
            Ok(ops::mse_loss(&recon, &input).item() as f64)
        })?;
        total += loss * chunk.len() as f64;
        seen += chunk.len();
    }
    Ok(total / seen.max(1) as f64)
}

/// Per-level MSE, each level's term divided by its unit count (inside
/// `mse_loss`) and by that level's target variance, then averaged across
/// levels. Unit-count division alone does not equalize level magnitudes:
/// the coarse levels carry several times the variance of the fine ones and
/// would otherwise dominate training, starving the fine-scale dynamics.
fn level_loss(
    pred: &heap_models::HierarchicalEmbedding<f32>,
    target: &heap_models::HierarchicalEmbedding<f32>,
    level_vars: &[f64],
) -> Tensor<f32> {
    let k = pred.levels.len();
    let mut acc: Option<Tensor<f32>> = None;
    for ((p, t), &var) in pred.levels.iter().zip(&target.levels).zip(level_vars) {
        let l = ops::scale(&ops::mse_loss(p, t), 1.0 / var.max(1e-12));
        acc = Some(match acc {
            Some(a) => ops::add(&a, &l),
            None => l,
        });
    }
    ops::scale(&acc.expect("at least one level"), 1.0 / k as f64)
}

/// Per-level variance of the training-pair targets, the normalization scale
/// for the predictor loss. Deterministic given the store and the split.
fn level_variances(store: &EmbeddingStore, train_local: &[usize]) -> Vec<f64> {
    let depth = store.levels.len();
    let mut vars = Vec::with_capacity(depth);
    for level in 0..depth {
        let mut sum = 0.0f64;
        let mut sq = 0.0f64;
        let mut n = 0usize;
        for &start in train_local {
            for &v in store.level_slice(level, start + 1) {
                sum += v as f64;
                sq += (v as f64) * (v as f64);
                n += 1;
            }
        }
        let mean = sum / n.max(1) as f64;
        vars.push((sq / n.max(1) as f64 - mean * mean).max(1e-12));
    }
    vars
}

/// Trains the predictor stage on precomputed embeddings: one-step prediction
/// from `y_i` to `y_{i+1}` over the pair split. The autoencoder is never
/// touched.
pub fn train_predictor(
    store: &EmbeddingStore,
    split: &DatasetSplit,
    model_cfg: &ModelConfig,
    cfg: &TrainConfig,
) -> Result<(Model<f32>, History), PipelineError> {
    let cutoff = store.transient_cutoff;
    let to_local = |abs: &[usize]| -> Result<Vec<usize>, PipelineError> {
        abs.iter()
            .map(|&a| {
                a.checked_sub(cutoff)
                    .filter(|&l| l + 1 < store.len())
                    .ok_or_else(|| PipelineError::Config(format!("pair start {a} outside store")))
            })
            .collect()
    };
    let train_local = to_local(&split.pair_train)?;
    let dev_local = to_local(&split.pair_dev)?;
    let level_vars = level_variances(store, &train_local);

    let model = build_model::<f32>(model_cfg)?;
    let mut driver = Driver::new(cfg, model.predictor_params(), Vec::new());

    for epoch in 1..=cfg.max_epochs {
        let mut train_loss = 0.0;
        let mut seen = 0usize;
        let mut diverged = false;
        for batch in epoch_batches(&train_local, cfg.batch_size, model_cfg.seed, epoch) {
            let input = store.gather(&batch);
            let next: Vec<usize> = batch.iter().map(|&i| i + 1).collect();
            let target = store.gather(&next);
            let pred = model.predictor.step(&input)?;
            let loss = level_loss(&pred, &target, &level_vars);
            let lv = loss.item() as f64;
            if !lv.is_finite() {
                diverged = true;
                break;
            }
            backward(&loss);
            driver.step_opt();
            train_loss += lv * batch.len() as f64;
            seen += batch.len();
        }
        let train_loss = if diverged { f64::NAN } else { train_loss / seen.max(1) as f64 };

        let dev_loss = if diverged {
            f64::NAN
        } else {
            predictor_eval_loss(&model, store, &dev_local, cfg.batch_size, &level_vars)?
        };
        if !driver.observe(epoch, train_loss, dev_loss) {
            break;
        }
    }
    let history = driver.finish();
    Ok((model, history))
}

fn predictor_eval_loss(
    model: &Model<f32>,
    store: &EmbeddingStore,
    dev_local: &[usize],
    batch_size: usize,
    level_vars: &[f64],
) -> Result<f64, PipelineError> {
    let mut total = 0.0;
    let mut seen = 0usize;
    for chunk in dev_local.chunks(batch_size) {
        let input = store.gather(chunk);
        let next: Vec<usize> = chunk.iter().map(|&i| i + 1).collect();
        let target = store.gather(&next);
        let loss = no_grad(|| -> Result<f64, PipelineError> {
            let pred = model.predictor.step(&input)?;
            Ok(level_loss(&pred, &target, level_vars).item() as f64)
        })?;
        total += loss * chunk.len() as f64;
        seen += chunk.len();
    }
    Ok(total / seen.max(1) as f64)
}

/// Encodes every non-transient step once in eval mode; the resulting store is
/// the single source of predictor training inputs.
pub fn precompute_embeddings(
    model: &Model<f32>,
    traj: &Trajectory,
    transient_cutoff: usize,
    norm: &NormStats,
    ae_hash: u64,
) -> Result<EmbeddingStore, PipelineError> {
    let mut store = EmbeddingStore::new(ae_hash, transient_cutoff, model.config.level_specs());
    let steps: Vec<usize> = (transient_cutoff..traj.len()).collect();
    for chunk in steps.chunks(32) {
        let input = ae_batch(traj, chunk, norm);
        let emb = no_grad(|| model.encoder.encode(&input, Mode::Eval))?;
        // Unpack the batch into per-step slices.
        for (bi, _) in chunk.iter().enumerate() {
            let per_level: Vec<Vec<f32>> = emb
                .levels
                .iter()
                .map(|t| {
                    let per = t.numel() / chunk.len();
                    t.values()[bi * per..(bi + 1) * per].to_vec()
                })
                .collect();
            let refs: Vec<&[f32]> = per_level.iter().map(|v| v.as_slice()).collect();
            store.push_raw(&refs)?;
        }
    }
    Ok(store)
}
