//! Embedding store: every non-transient step encoded once by a single
//! autoencoder realization, shared read-only by all predictor trainings.
//!
//! ```text
//! magic "HEAPEMBS" | version u32 | ae_hash u64 | transient_cutoff u64
//! n_steps u64 | depth u32 | per level: stage u32, channels u32, size u32
//! payload: per step, per level, f32 x (channels * size^2)
//! ```

use std::fs::File;
use std::io::{BufReader, Read};
use std::path::Path;

use heap_models::{HierarchicalEmbedding, LevelSpec};
use heap_tensor::Tensor;

use super::{atomic_write, r_u32, r_u64, w_f32s, w_u32, w_u64};
use crate::PipelineError;

const MAGIC: &[u8; 8] = b"HEAPEMBS";
const VERSION: u32 = 1;

/// In-memory store; `data[level]` is `[step][channels * size^2]` flattened.
pub struct EmbeddingStore {
    pub ae_hash: u64,
    pub transient_cutoff: usize,
    pub levels: Vec<LevelSpec>,
    data: Vec<Vec<f32>>,
    n_steps: usize,
}

impl EmbeddingStore {
    pub fn new(ae_hash: u64, transient_cutoff: usize, levels: Vec<LevelSpec>) -> Self {
        let data = levels.iter().map(|_| Vec::new()).collect();
        Self { ae_hash, transient_cutoff, levels, data, n_steps: 0 }
    }

    pub fn len(&self) -> usize {
        self.n_steps
    }

    pub fn is_empty(&self) -> bool {
        self.n_steps == 0
    }

    fn per_level(&self, level: usize) -> usize {
        let l = &self.levels[level];
        l.channels * l.size * l.size
    }

    /// Appends one step's embedding (batch extent must be 1).
    pub fn push(&mut self, emb: &HierarchicalEmbedding<f32>) -> Result<(), PipelineError> {
        if emb.levels.len() != self.levels.len() {
            return Err(PipelineError::Config(format!(
                "embedding has {} levels, store expects {}",
                emb.levels.len(),
                self.levels.len()
            )));
        }
        for (i, t) in emb.levels.iter().enumerate() {
            let want = self.per_level(i);
            if t.numel() != want {
                return Err(PipelineError::Config(format!(
                    "level {i} has {} units, store expects {want}",
                    t.numel()
                )));
            }
            self.data[i].extend_from_slice(&t.values());
        }
        self.n_steps += 1;
        Ok(())
    }

    /// Extends one step from raw per-level slices (batch already unpacked).
    pub fn push_raw(&mut self, per_level: &[&[f32]]) -> Result<(), PipelineError> {
        if per_level.len() != self.levels.len() {
            return Err(PipelineError::Config("level count mismatch".into()));
        }
        for (i, slice) in per_level.iter().enumerate() {
            if slice.len() != self.per_level(i) {
                return Err(PipelineError::Config(format!("level {i} size mismatch")));
            }
            self.data[i].extend_from_slice(slice);
        }
        self.n_steps += 1;
        Ok(())
    }

    pub fn level_slice(&self, level: usize, step: usize) -> &[f32] {
        let per = self.per_level(level);
        &self.data[level][step * per..(step + 1) * per]
    }

    /// Gathers store steps into a batched embedding, `[b, c, s, s]` per level.
    pub fn gather(&self, steps: &[usize]) -> HierarchicalEmbedding<f32> {
        let levels = self
            .levels
            .iter()
            .enumerate()
            .map(|(i, l)| {
                let per = self.per_level(i);
                let mut values = Vec::with_capacity(steps.len() * per);
                for &s in steps {
                    values.extend_from_slice(self.level_slice(i, s));
                }
                Tensor::from_vec(&[steps.len(), l.channels, l.size, l.size], values)
            })
            .collect();
        HierarchicalEmbedding { levels }
    }
}

pub fn write_embedding_store(path: impl AsRef<Path>, store: &EmbeddingStore) -> Result<(), PipelineError> {
    let path = path.as_ref();
    atomic_write(path, |w| {
        use std::io::Write;
        w.write_all(MAGIC).map_err(|e| PipelineError::io(path, e))?;
        w_u32(w, VERSION, path)?;
        w_u64(w, store.ae_hash, path)?;
        w_u64(w, store.transient_cutoff as u64, path)?;
        w_u64(w, store.n_steps as u64, path)?;
        w_u32(w, store.levels.len() as u32, path)?;
        for l in &store.levels {
            w_u32(w, l.stage as u32, path)?;
            w_u32(w, l.channels as u32, path)?;
            w_u32(w, l.size as u32, path)?;
        }
        for step in 0..store.n_steps {
            for level in 0..store.levels.len() {
                w_f32s(w, store.level_slice(level, step), path)?;
            }
        }
        Ok(())
    })
}

pub fn read_embedding_store(
    path: impl AsRef<Path>,
    expected_ae_hash: Option<u64>,
) -> Result<EmbeddingStore, PipelineError> {
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
    let ae_hash = r_u64(&mut r, path)?;
    if let Some(expected) = expected_ae_hash {
        if ae_hash != expected {
            return Err(PipelineError::format(
                path,
                format!("store was produced by AE {ae_hash:016x}, expected {expected:016x}"),
            ));
        }
    }
    let transient_cutoff = r_u64(&mut r, path)? as usize;
    let n_steps = r_u64(&mut r, path)? as usize;
    let depth = r_u32(&mut r, path)? as usize;
    let mut levels = Vec::with_capacity(depth);
    for _ in 0..depth {
        let stage = r_u32(&mut r, path)? as usize;
        let channels = r_u32(&mut r, path)? as usize;
        let size = r_u32(&mut r, path)? as usize;
        levels.push(LevelSpec { stage, channels, size });
    }
    let mut store = EmbeddingStore::new(ae_hash, transient_cutoff, levels);
    for _ in 0..n_steps {
        let mut slices: Vec<Vec<f32>> = Vec::with_capacity(depth);
        for level in 0..depth {
            let per = store.per_level(level);
            slices.push(super::r_f32s(&mut r, per, path)?);
        }
        let refs: Vec<&[f32]> = slices.iter().map(|s| s.as_slice()).collect();
        store.push_raw(&refs)?;
    }
    Ok(store)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tmp(name: &str) -> std::path::PathBuf {
        let dir = std::env::temp_dir().join(format!("heap-emb-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        dir.join(name)
    }

    fn sample_store() -> EmbeddingStore {
        let levels = vec![
            LevelSpec { stage: 1, channels: 2, size: 4 },
            LevelSpec { stage: 2, channels: 2, size: 2 },
        ];
        let mut store = EmbeddingStore::new(0xabc, 200, levels);
        for step in 0..5 {
            let l0: Vec<f32> = (0..32).map(|i| (step * 100 + i) as f32).collect();
            let l1: Vec<f32> = (0..8).map(|i| (step * 100 + i) as f32 * 0.5).collect();
            store.push_raw(&[&l0, &l1]).unwrap();
        }
        store
    }

    #[test]
    fn round_trip_bit_exact() {
        let store = sample_store();
        let p = tmp("s.bin");
        write_embedding_store(&p, &store).unwrap();
        let back = read_embedding_store(&p, Some(0xabc)).unwrap();
        assert_eq!(back.len(), 5);
        assert_eq!(back.transient_cutoff, 200);
        for step in 0..5 {
            assert_eq!(back.level_slice(0, step), store.level_slice(0, step));
            assert_eq!(back.level_slice(1, step), store.level_slice(1, step));
        }
        let p2 = tmp("s2.bin");
        write_embedding_store(&p2, &back).unwrap();
        assert_eq!(std::fs::read(&p).unwrap(), std::fs::read(&p2).unwrap());
    }

    #[test]
    fn ae_hash_mismatch_rejected() {
        let p = tmp("mismatch.bin");
        write_embedding_store(&p, &sample_store()).unwrap();
        assert!(matches!(
            read_embedding_store(&p, Some(0xdef)),
            Err(PipelineError::Format { .. })
        ));
    }

    #[test]
    fn gather_builds_batches() {
        let store = sample_store();
        let emb = store.gather(&[1, 3]);
        assert_eq!(emb.levels[0].shape(), &[2, 2, 4, 4]);
        assert_eq!(emb.levels[0].values()[0], 100.0);
        assert_eq!(emb.levels[0].values()[32], 300.0);
    }
}
