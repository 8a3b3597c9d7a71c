//! Flat little-endian binary formats with magic + version headers. Every
//! writer goes through a temp-file-then-rename step so a crashed writer never
//! leaves a readable-but-partial file behind.

mod checkpoint;
mod dataset;
mod manifest;
mod store;

pub use checkpoint::{
    read_checkpoint, write_ae_checkpoint, write_predictor_checkpoint, CheckpointFile,
    CheckpointKind,
};
pub use dataset::{read_dataset, write_dataset, DatasetWriter};
pub use manifest::{Manifest, ManifestEntry, RealizationStatus};
pub use store::{read_embedding_store, write_embedding_store, EmbeddingStore};

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use crate::PipelineError;

/// FNV-1a over a byte stream; used for content identity of artifacts.
#[derive(Clone, Copy)]
pub struct Fnv1a(u64);

impl Fnv1a {
    pub fn new() -> Self {
        Fnv1a(0xcbf2_9ce4_8422_2325)
    }

    pub fn update(&mut self, bytes: &[u8]) {
        for &b in bytes {
            self.0 ^= b as u64;
            self.0 = self.0.wrapping_mul(0x0000_0100_0000_01b3);
        }
    }

    pub fn finish(self) -> u64 {
        self.0
    }
}

impl Default for Fnv1a {
    fn default() -> Self {
        Self::new()
    }
}

pub fn hash_file(path: impl AsRef<Path>) -> Result<u64, PipelineError> {
    let path = path.as_ref();
    let mut f = BufReader::new(File::open(path).map_err(|e| PipelineError::io(path, e))?);
    let mut hasher = Fnv1a::new();
    let mut buf = [0u8; 64 * 1024];
    loop {
        let n = f.read(&mut buf).map_err(|e| PipelineError::io(path, e))?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
    }
    Ok(hasher.finish())
}

/// Writes via `<path>.tmp` and renames into place on success.
pub fn atomic_write(
    path: impl AsRef<Path>,
    write_fn: impl FnOnce(&mut BufWriter<File>) -> Result<(), PipelineError>,
) -> Result<(), PipelineError> {
    let path = path.as_ref();
    let tmp: PathBuf = {
        let mut os = path.as_os_str().to_os_string();
        os.push(".tmp");
        os.into()
    };
    let file = File::create(&tmp).map_err(|e| PipelineError::io(&tmp, e))?;
    let mut w = BufWriter::new(file);
    write_fn(&mut w)?;
    w.flush().map_err(|e| PipelineError::io(&tmp, e))?;
    drop(w);
    std::fs::rename(&tmp, path).map_err(|e| PipelineError::io(path, e))?;
    Ok(())
}

// Little-endian primitive helpers shared by the format modules.

pub(crate) fn w_u32(w: &mut impl Write, v: u32, path: &Path) -> Result<(), PipelineError> {
    w.write_all(&v.to_le_bytes()).map_err(|e| PipelineError::io(path, e))
}

pub(crate) fn w_u64(w: &mut impl Write, v: u64, path: &Path) -> Result<(), PipelineError> {
    w.write_all(&v.to_le_bytes()).map_err(|e| PipelineError::io(path, e))
}

pub(crate) fn w_f64(w: &mut impl Write, v: f64, path: &Path) -> Result<(), PipelineError> {
    w.write_all(&v.to_le_bytes()).map_err(|e| PipelineError::io(path, e))
}

pub(crate) fn w_f32s(w: &mut impl Write, vs: &[f32], path: &Path) -> Result<(), PipelineError> {
    let mut buf = Vec::with_capacity(vs.len() * 4);
    for v in vs {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    w.write_all(&buf).map_err(|e| PipelineError::io(path, e))
}

pub(crate) fn r_u32(r: &mut impl Read, path: &Path) -> Result<u32, PipelineError> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b).map_err(|e| PipelineError::io(path, e))?;
    Ok(u32::from_le_bytes(b))
}

pub(crate) fn r_u64(r: &mut impl Read, path: &Path) -> Result<u64, PipelineError> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b).map_err(|e| PipelineError::io(path, e))?;
    Ok(u64::from_le_bytes(b))
}

pub(crate) fn r_f64(r: &mut impl Read, path: &Path) -> Result<f64, PipelineError> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b).map_err(|e| PipelineError::io(path, e))?;
    Ok(f64::from_le_bytes(b))
}

pub(crate) fn r_f32s(r: &mut impl Read, n: usize, path: &Path) -> Result<Vec<f32>, PipelineError> {
    let mut buf = vec![0u8; n * 4];
    r.read_exact(&mut buf).map_err(|e| PipelineError::io(path, e))?;
    Ok(buf.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fnv_distinguishes_inputs() {
        let mut a = Fnv1a::new();
        a.update(b"hello");
        let mut b = Fnv1a::new();
        b.update(b"hellp");
        assert_ne!(a.finish(), b.finish());
    }

    #[test]
    fn atomic_write_leaves_no_tmp() {
        let dir = std::env::temp_dir().join(format!("heap-atomic-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("x.bin");
        atomic_write(&path, |w| {
            w.write_all(b"payload").map_err(|e| PipelineError::io("x", e))
        })
        .unwrap();
        assert_eq!(std::fs::read(&path).unwrap(), b"payload");
        assert!(!dir.join("x.bin.tmp").exists());
        std::fs::remove_dir_all(&dir).unwrap();
    }
}
