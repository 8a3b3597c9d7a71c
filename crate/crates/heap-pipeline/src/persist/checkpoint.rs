//! Model checkpoints:
//!
//! ```text
//! magic "HEAPCKPT" | version u32 | kind u8 (0 = autoencoder, 1 = predictor)
//! config record: variant kind u8, depth u8, interaction u8,
//!   encoder_batch_norm u8, predictor_layer_norm u8, pad u8 x3,
//!   embed_channels u32, internal_steps u32, expansion u32, input_size u32,
//!   lateral_kernel u32, inter_kernel u32, down_widths u32 x5, real_width u32,
//!   seed u64, activation_slope f64, ae_hash u64,
//!   norm_present u8 + pad u8 x7, norm mean/std f64 x4
//! param_count u32
//! per parameter: name_len u32 | name bytes | trainable u8 | ndim u32 |
//!   dims u32 x ndim | f32 data
//! optimizer_present u8; when 1: step u64, lr f64, beta1 f64, beta2 f64,
//!   eps f64, then per trainable parameter m then v as f32 arrays
//! ```
//!
//! Round trips are bit-exact; a rebuilt model is the loaded one.

use std::fs::File;
use std::io::{BufReader, Read, Write};
use std::path::Path;

use heap_models::{Model, ModelConfig, Variant};
use heap_tensor::{Adam, Parameter, Tensor};

use super::{atomic_write, hash_file, r_f32s, r_f64, r_u32, r_u64, w_f32s, w_f64, w_u32, w_u64};
use crate::{NormStats, PipelineError};

const MAGIC: &[u8; 8] = b"HEAPCKPT";
const VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CheckpointKind {
    Autoencoder,
    Predictor,
}

pub struct ParamRecord {
    pub name: String,
    pub trainable: bool,
    pub shape: Vec<usize>,
    pub data: Vec<f32>,
}

pub struct AdamRecord {
    pub step_count: u64,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub m: Vec<Vec<f32>>,
    pub v: Vec<Vec<f32>>,
}

/// Parsed checkpoint, not yet bound to a model.
pub struct CheckpointFile {
    pub kind: CheckpointKind,
    pub config: ModelConfig,
    pub norm: Option<NormStats>,
    /// Hash of the producing AE checkpoint (predictor checkpoints only).
    pub ae_hash: u64,
    pub params: Vec<ParamRecord>,
    pub optimizer: Option<AdamRecord>,
}

fn write_config(w: &mut impl Write, cfg: &ModelConfig, path: &Path) -> Result<(), PipelineError> {
    let (kind, depth) = match cfg.variant {
        Variant::H(k) => (0u8, k),
        Variant::C(k) => (1u8, k),
    };
    let flags = [
        kind,
        depth,
        cfg.interaction as u8,
        cfg.encoder_batch_norm as u8,
        cfg.predictor_layer_norm as u8,
        0,
        0,
        0,
    ];
    w.write_all(&flags).map_err(|e| PipelineError::io(path, e))?;
    for v in [
        cfg.embed_channels,
        cfg.internal_steps,
        cfg.expansion,
        cfg.input_size,
        cfg.lateral_kernel,
        cfg.inter_kernel,
    ] {
        w_u32(w, v as u32, path)?;
    }
    for v in cfg.down_widths {
        w_u32(w, v as u32, path)?;
    }
    w_u32(w, 4, path)?; // stored scalar width
    w_u64(w, cfg.seed, path)?;
    w_f64(w, cfg.activation_slope, path)?;
    Ok(())
}

fn read_config(r: &mut impl Read, path: &Path) -> Result<ModelConfig, PipelineError> {
    let mut flags = [0u8; 8];
    r.read_exact(&mut flags).map_err(|e| PipelineError::io(path, e))?;
    let variant = match flags[0] {
        0 => Variant::H(flags[1]),
        1 => Variant::C(flags[1]),
        other => return Err(PipelineError::format(path, format!("bad variant kind {other}"))),
    };
    let embed_channels = r_u32(r, path)? as usize;
    let internal_steps = r_u32(r, path)? as usize;
    let expansion = r_u32(r, path)? as usize;
    let input_size = r_u32(r, path)? as usize;
    let lateral_kernel = r_u32(r, path)? as usize;
    let inter_kernel = r_u32(r, path)? as usize;
    let mut down_widths = [0usize; 5];
    for v in down_widths.iter_mut() {
        *v = r_u32(r, path)? as usize;
    }
    let width = r_u32(r, path)?;
    if width != 4 {
        return Err(PipelineError::format(path, format!("unsupported scalar width {width}")));
    }
    let seed = r_u64(r, path)?;
    let activation_slope = r_f64(r, path)?;
    Ok(ModelConfig {
        variant,
        embed_channels,
        internal_steps,
        expansion,
        interaction: flags[2] != 0,
        seed,
        input_size,
        activation_slope,
        down_widths,
        lateral_kernel,
        inter_kernel,
        encoder_batch_norm: flags[3] != 0,
        predictor_layer_norm: flags[4] != 0,
    })
}

fn gather_records(
    params: &[Parameter<f32>],
    buffers: &[(String, Tensor<f32>)],
) -> Vec<ParamRecord> {
    let mut out: Vec<ParamRecord> = params
        .iter()
        .map(|p| ParamRecord {
            name: p.name.clone(),
            trainable: true,
            shape: p.tensor.shape().to_vec(),
            data: p.tensor.to_vec(),
        })
        .collect();
    out.extend(buffers.iter().map(|(name, t)| ParamRecord {
        name: name.clone(),
        trainable: false,
        shape: t.shape().to_vec(),
        data: t.to_vec(),
    }));
    out
}

fn write_checkpoint(
    path: &Path,
    kind: CheckpointKind,
    config: &ModelConfig,
    norm: Option<&NormStats>,
    ae_hash: u64,
    records: &[ParamRecord],
    optimizer: Option<&Adam<f32>>,
) -> Result<(), PipelineError> {
    atomic_write(path, |w| {
        w.write_all(MAGIC).map_err(|e| PipelineError::io(path, e))?;
        w_u32(w, VERSION, path)?;
        w.write_all(&[match kind {
            CheckpointKind::Autoencoder => 0u8,
            CheckpointKind::Predictor => 1u8,
        }])
        .map_err(|e| PipelineError::io(path, e))?;
        write_config(w, config, path)?;
        w_u64(w, ae_hash, path)?;
        let mut norm_block = [0u8; 8];
        norm_block[0] = norm.is_some() as u8;
        w.write_all(&norm_block).map_err(|e| PipelineError::io(path, e))?;
        let n = norm.copied().unwrap_or(NormStats::identity());
        for v in [n.mean[0], n.mean[1], n.std[0], n.std[1]] {
            w_f64(w, v, path)?;
        }

        w_u32(w, records.len() as u32, path)?;
        for rec in records {
            w_u32(w, rec.name.len() as u32, path)?;
            w.write_all(rec.name.as_bytes()).map_err(|e| PipelineError::io(path, e))?;
            w.write_all(&[rec.trainable as u8]).map_err(|e| PipelineError::io(path, e))?;
            w_u32(w, rec.shape.len() as u32, path)?;
            for &d in &rec.shape {
                w_u32(w, d as u32, path)?;
            }
            w_f32s(w, &rec.data, path)?;
        }

        match optimizer {
            Some(opt) => {
                w.write_all(&[1u8]).map_err(|e| PipelineError::io(path, e))?;
                let (step, m, v) = opt.state();
                w_u64(w, step, path)?;
                for x in [opt.lr(), 0.9, 0.999, 1e-8] {
                    w_f64(w, x, path)?;
                }
                for (mi, vi) in m.iter().zip(v) {
                    w_f32s(w, mi, path)?;
                    w_f32s(w, vi, path)?;
                }
            }
            None => w.write_all(&[0u8]).map_err(|e| PipelineError::io(path, e))?,
        }
        Ok(())
    })
}

/// Saves encoder+decoder parameters, batch-norm buffers, and normalization
/// stats. Returns the file hash used to pair embedding stores and predictor
/// checkpoints with their autoencoder.
pub fn write_ae_checkpoint(
    path: impl AsRef<Path>,
    model: &Model<f32>,
    norm: &NormStats,
    optimizer: Option<&Adam<f32>>,
) -> Result<u64, PipelineError> {
    let path = path.as_ref();
    let records = gather_records(&model.ae_params(), &model.buffers());
    write_checkpoint(
        path,
        CheckpointKind::Autoencoder,
        &model.config,
        Some(norm),
        0,
        &records,
        optimizer,
    )?;
    hash_file(path)
}

pub fn write_predictor_checkpoint(
    path: impl AsRef<Path>,
    model: &Model<f32>,
    ae_hash: u64,
    optimizer: Option<&Adam<f32>>,
) -> Result<u64, PipelineError> {
    let path = path.as_ref();
    let records = gather_records(&model.predictor_params(), &[]);
    write_checkpoint(path, CheckpointKind::Predictor, &model.config, None, ae_hash, &records, optimizer)?;
    hash_file(path)
}

pub fn read_checkpoint(path: impl AsRef<Path>) -> Result<CheckpointFile, PipelineError> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| PipelineError::io(path, e))?;
    let mut r = BufReader::new(file);

    let mut magic = [0u8; 8];
    r.read_exact(&mut magic).map_err(|e| PipelineError::io(path, e))?;
    if &magic != MAGIC {
        return Err(PipelineError::format(path, format!("bad magic {magic:?}")));
    }
    let version = r_u32(&mut r, path)?;
    if version != VERSION {
        return Err(PipelineError::format(path, format!("unsupported version {version}")));
    }
    let mut kind_b = [0u8; 1];
    r.read_exact(&mut kind_b).map_err(|e| PipelineError::io(path, e))?;
    let kind = match kind_b[0] {
        0 => CheckpointKind::Autoencoder,
        1 => CheckpointKind::Predictor,
        other => return Err(PipelineError::format(path, format!("bad checkpoint kind {other}"))),
    };
    let config = read_config(&mut r, path)?;
    let ae_hash = r_u64(&mut r, path)?;
    let mut norm_block = [0u8; 8];
    r.read_exact(&mut norm_block).map_err(|e| PipelineError::io(path, e))?;
    let mut stats = [0f64; 4];
    for v in stats.iter_mut() {
        *v = r_f64(&mut r, path)?;
    }
    let norm = (norm_block[0] != 0)
        .then(|| NormStats { mean: [stats[0], stats[1]], std: [stats[2], stats[3]] });

    let count = r_u32(&mut r, path)? as usize;
    let mut params = Vec::with_capacity(count);
    for _ in 0..count {
        let name_len = r_u32(&mut r, path)? as usize;
        let mut name_bytes = vec![0u8; name_len];
        r.read_exact(&mut name_bytes).map_err(|e| PipelineError::io(path, e))?;
        let name = String::from_utf8(name_bytes)
            .map_err(|_| PipelineError::format(path, "non-utf8 parameter name"))?;
        let mut tr = [0u8; 1];
        r.read_exact(&mut tr).map_err(|e| PipelineError::io(path, e))?;
        let ndim = r_u32(&mut r, path)? as usize;
        let mut shape = Vec::with_capacity(ndim);
        for _ in 0..ndim {
            shape.push(r_u32(&mut r, path)? as usize);
        }
        let numel: usize = shape.iter().product();
        let data = r_f32s(&mut r, numel, path)?;
        params.push(ParamRecord { name, trainable: tr[0] != 0, shape, data });
    }

    let mut opt_b = [0u8; 1];
    r.read_exact(&mut opt_b).map_err(|e| PipelineError::io(path, e))?;
    let optimizer = if opt_b[0] != 0 {
        let step_count = r_u64(&mut r, path)?;
        let lr = r_f64(&mut r, path)?;
        let beta1 = r_f64(&mut r, path)?;
        let beta2 = r_f64(&mut r, path)?;
        let eps = r_f64(&mut r, path)?;
        let mut m = Vec::new();
        let mut v = Vec::new();
        for rec in params.iter().filter(|p| p.trainable) {
            let n: usize = rec.shape.iter().product();
            m.push(r_f32s(&mut r, n, path)?);
            v.push(r_f32s(&mut r, n, path)?);
        }
        Some(AdamRecord { step_count, lr, beta1, beta2, eps, m, v })
    } else {
        None
    };

    Ok(CheckpointFile { kind, config, norm, ae_hash, params, optimizer })
}

impl CheckpointFile {
    /// Architecture equality, ignoring the seed (weights override the init).
    pub fn same_architecture(&self, other: &ModelConfig) -> bool {
        let mut a = self.config.clone();
        let mut b = other.clone();
        a.seed = 0;
        b.seed = 0;
        a == b
    }

    /// Copies records into the given parameter/buffer set; every record must
    /// find its target and every target must be filled.
    pub fn apply(
        &self,
        params: &[Parameter<f32>],
        buffers: &[(String, Tensor<f32>)],
    ) -> Result<(), PipelineError> {
        let mut filled = std::collections::HashSet::new();
        for rec in &self.params {
            let target: Option<(&str, &Tensor<f32>)> = params
                .iter()
                .find(|p| p.name == rec.name)
                .map(|p| (p.name.as_str(), &p.tensor))
                .or_else(|| {
                    buffers.iter().find(|(n, _)| *n == rec.name).map(|(n, t)| (n.as_str(), t))
                });
            let Some((name, tensor)) = target else {
                return Err(PipelineError::UnknownParameter(rec.name.clone()));
            };
            if tensor.shape() != rec.shape.as_slice() {
                return Err(PipelineError::ParamShape {
                    name: rec.name.clone(),
                    expected: tensor.shape().to_vec(),
                    got: rec.shape.clone(),
                });
            }
            tensor.values_mut().copy_from_slice(&rec.data);
            filled.insert(name.to_string());
        }
        for p in params {
            if !filled.contains(&p.name) {
                return Err(PipelineError::MissingParameter(p.name.clone()));
            }
        }
        for (n, _) in buffers {
            if !filled.contains(n) {
                return Err(PipelineError::MissingParameter(n.clone()));
            }
        }
        Ok(())
    }

    /// Rebuilds the model from the embedded config and loads the stored
    /// parameter set (AE checkpoints fill encoder+decoder+buffers, predictor
    /// checkpoints fill the predictor).
    pub fn instantiate(&self) -> Result<Model<f32>, PipelineError> {
        let model = heap_models::build_model::<f32>(&self.config)?;
        match self.kind {
            CheckpointKind::Autoencoder => self.apply(&model.ae_params(), &model.buffers())?,
            CheckpointKind::Predictor => self.apply(&model.predictor_params(), &[])?,
        }
        Ok(model)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use heap_models::{build_model, Mode, ModelConfig, Variant};
    use heap_tensor::no_grad;

    fn tmp(name: &str) -> std::path::PathBuf {
        let dir = std::env::temp_dir().join(format!("heap-ckpt-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        dir.join(name)
    }

    fn small_config(variant: Variant, seed: u64) -> ModelConfig {
        let mut cfg = ModelConfig::new(variant, seed);
        cfg.input_size = 16;
        cfg
    }

    #[test]
    fn ae_round_trip_reproduces_forward_pass() {
        let cfg = small_config(Variant::H(2), 3);
        let model = build_model::<f32>(&cfg).unwrap();
        let norm = NormStats { mean: [0.1, -0.2], std: [1.5, 0.7] };
        let path = tmp("ae.ckpt");
        let h1 = write_ae_checkpoint(&path, &model, &norm, None).unwrap();

        let loaded = read_checkpoint(&path).unwrap();
        assert_eq!(loaded.kind, CheckpointKind::Autoencoder);
        assert_eq!(loaded.norm, Some(norm));
        let rebuilt = loaded.instantiate().unwrap();

        let x = heap_tensor::Tensor::from_vec(
            &[1, 2, 16, 16],
            (0..512).map(|i| ((i * 31 % 17) as f32) * 0.1 - 0.8).collect(),
        );
        no_grad(|| {
            let e1 = model.encoder.encode(&x, Mode::Eval).unwrap();
            let e2 = rebuilt.encoder.encode(&x, Mode::Eval).unwrap();
            for (a, b) in e1.levels.iter().zip(&e2.levels) {
                assert_eq!(a.to_vec(), b.to_vec());
            }
            let d1 = model.decoder.decode(&e1, Mode::Eval).unwrap();
            let d2 = rebuilt.decoder.decode(&e2, Mode::Eval).unwrap();
            assert_eq!(d1.to_vec(), d2.to_vec());
        });

        // Re-writing the loaded model yields the identical file.
        let path2 = tmp("ae2.ckpt");
        let h2 = write_ae_checkpoint(&path2, &rebuilt, &norm, None).unwrap();
        assert_eq!(h1, h2);
        assert_eq!(std::fs::read(&path).unwrap(), std::fs::read(&path2).unwrap());
    }

    #[test]
    fn predictor_checkpoint_carries_ae_hash() {
        let cfg = small_config(Variant::H(1), 4);
        let model = build_model::<f32>(&cfg).unwrap();
        let path = tmp("pred.ckpt");
        write_predictor_checkpoint(&path, &model, 0xdead_beef, None).unwrap();
        let loaded = read_checkpoint(&path).unwrap();
        assert_eq!(loaded.kind, CheckpointKind::Predictor);
        assert_eq!(loaded.ae_hash, 0xdead_beef);
        loaded.instantiate().unwrap();
    }

    #[test]
    fn wrong_variant_load_rejected() {
        let mut cfg3 = small_config(Variant::H(3), 1);
        cfg3.input_size = 64;
        let m3 = build_model::<f32>(&cfg3).unwrap();
        let path = tmp("h3.ckpt");
        write_ae_checkpoint(&path, &m3, &NormStats::identity(), None).unwrap();
        let loaded = read_checkpoint(&path).unwrap();

        let mut cfg4 = small_config(Variant::H(4), 1);
        cfg4.input_size = 64;
        assert!(!loaded.same_architecture(&cfg4));
        let m4 = build_model::<f32>(&cfg4).unwrap();
        // Applying H3 records onto H4 fails with a structured error naming a
        // parameter (H4 has stage-4 parameters the checkpoint cannot fill).
        let err = loaded.apply(&m4.ae_params(), &m4.buffers()).unwrap_err();
        assert!(matches!(err, PipelineError::MissingParameter(_)), "got {err:?}");
    }

    #[test]
    fn shape_mismatch_names_parameter() {
        let cfg = small_config(Variant::H(1), 1);
        let model = build_model::<f32>(&cfg).unwrap();
        let path = tmp("shape.ckpt");
        write_ae_checkpoint(&path, &model, &NormStats::identity(), None).unwrap();
        let loaded = read_checkpoint(&path).unwrap();

        let mut wide = cfg.clone();
        wide.down_widths = [24, 32, 64, 128, 128];
        let other = build_model::<f32>(&wide).unwrap();
        let err = loaded.apply(&other.ae_params(), &other.buffers()).unwrap_err();
        match err {
            PipelineError::ParamShape { name, .. } => assert_eq!(name, "enc.d1.w"),
            other => panic!("expected ParamShape, got {other:?}"),
        }
    }

    #[test]
    fn optimizer_state_round_trips() {
        let cfg = small_config(Variant::H(1), 9);
        let model = build_model::<f32>(&cfg).unwrap();
        let params = model.ae_params();
        let mut opt = heap_tensor::Adam::new(&params, 0.01);
        // Produce nonzero moments.
        for p in &params {
            p.tensor.accumulate_grad(&vec![0.5; p.tensor.numel()]);
        }
        opt.step(&params);
        let path = tmp("opt.ckpt");
        write_ae_checkpoint(&path, &model, &NormStats::identity(), Some(&opt)).unwrap();
        let loaded = read_checkpoint(&path).unwrap();
        let rec = loaded.optimizer.expect("optimizer stored");
        assert_eq!(rec.step_count, 1);
        assert_eq!(rec.m.len(), params.len());
        assert!(rec.m.iter().any(|m| m.iter().any(|&v| v != 0.0)));
    }
}
