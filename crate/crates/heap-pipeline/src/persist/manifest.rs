//! Study manifest: one line-delimited record per realization, rewritten
//! atomically on every update so readers never see a half-written file.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use super::{atomic_write, Fnv1a};
use crate::PipelineError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RealizationStatus {
    Pending,
    Trained,
    Evaluated,
    Failed,
}

impl RealizationStatus {
    fn as_str(self) -> &'static str {
        match self {
            RealizationStatus::Pending => "pending",
            RealizationStatus::Trained => "trained",
            RealizationStatus::Evaluated => "evaluated",
            RealizationStatus::Failed => "failed",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        match s {
            "pending" => Some(Self::Pending),
            "trained" => Some(Self::Trained),
            "evaluated" => Some(Self::Evaluated),
            "failed" => Some(Self::Failed),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ManifestEntry {
    pub label: String,
    pub seed: u64,
    pub status: RealizationStatus,
    pub ckpt: String,
    pub ckpt_hash: u64,
    /// Worst of the three primary metric errors (max over fields).
    pub worst: Option<f64>,
    pub spatial: Option<f64>,
    pub temporal: Option<f64>,
    pub autocorr: Option<f64>,
    pub extrema: Option<f64>,
    pub train_secs: f64,
}

impl ManifestEntry {
    fn to_line(&self) -> String {
        // `{:e}` prints the shortest exact representation, so reloading a
        // manifest reproduces bit-identical floats.
        let opt = |v: Option<f64>| v.map(|x| format!("{x:e}")).unwrap_or_else(|| "-".into());
        format!(
            "label={} seed={} status={} ckpt={} hash={:016x} worst={} spatial={} temporal={} autocorr={} extrema={} train_secs={:.3}",
            self.label,
            self.seed,
            self.status.as_str(),
            self.ckpt,
            self.ckpt_hash,
            opt(self.worst),
            opt(self.spatial),
            opt(self.temporal),
            opt(self.autocorr),
            opt(self.extrema),
            self.train_secs,
        )
    }

    fn parse(line: &str, path: &Path) -> Result<Self, PipelineError> {
        let mut map = BTreeMap::new();
        for tok in line.split_whitespace() {
            let (k, v) = tok
                .split_once('=')
                .ok_or_else(|| PipelineError::format(path, format!("bad token '{tok}'")))?;
            map.insert(k.to_string(), v.to_string());
        }
        let get = |k: &str| {
            map.get(k)
                .cloned()
                .ok_or_else(|| PipelineError::format(path, format!("missing field '{k}'")))
        };
        let opt_f = |k: &str| -> Result<Option<f64>, PipelineError> {
            let v = get(k)?;
            if v == "-" {
                Ok(None)
            } else {
                v.parse::<f64>()
                    .map(Some)
                    .map_err(|_| PipelineError::format(path, format!("bad float in '{k}'")))
            }
        };
        Ok(ManifestEntry {
            label: get("label")?,
            seed: get("seed")?
                .parse()
                .map_err(|_| PipelineError::format(path, "bad seed"))?,
            status: RealizationStatus::parse(&get("status")?)
                .ok_or_else(|| PipelineError::format(path, "bad status"))?,
            ckpt: get("ckpt")?,
            ckpt_hash: u64::from_str_radix(&get("hash")?, 16)
                .map_err(|_| PipelineError::format(path, "bad hash"))?,
            worst: opt_f("worst")?,
            spatial: opt_f("spatial")?,
            temporal: opt_f("temporal")?,
            autocorr: opt_f("autocorr")?,
            extrema: opt_f("extrema")?,
            train_secs: get("train_secs")?
                .parse()
                .map_err(|_| PipelineError::format(path, "bad train_secs"))?,
        })
    }
}

/// Entries keyed by `(label, seed)`; all writes rewrite the file atomically.
pub struct Manifest {
    path: PathBuf,
    pub entries: Vec<ManifestEntry>,
}

impl Manifest {
    pub fn load_or_new(path: impl AsRef<Path>) -> Result<Self, PipelineError> {
        let path = path.as_ref().to_path_buf();
        let mut entries = Vec::new();
        if path.exists() {
            let text =
                std::fs::read_to_string(&path).map_err(|e| PipelineError::io(&path, e))?;
            for line in text.lines() {
                let line = line.trim();
                if line.is_empty() || line.starts_with('#') {
                    continue;
                }
                entries.push(ManifestEntry::parse(line, &path)?);
            }
        }
        Ok(Self { path, entries })
    }

    pub fn get(&self, label: &str, seed: u64) -> Option<&ManifestEntry> {
        self.entries.iter().find(|e| e.label == label && e.seed == seed)
    }

    pub fn upsert(&mut self, entry: ManifestEntry) -> Result<(), PipelineError> {
        match self.entries.iter_mut().find(|e| e.label == entry.label && e.seed == entry.seed) {
            Some(slot) => *slot = entry,
            None => self.entries.push(entry),
        }
        self.save()
    }

    pub fn save(&self) -> Result<(), PipelineError> {
        let path = &self.path;
        atomic_write(path, |w| {
            use std::io::Write;
            for e in &self.entries {
                writeln!(w, "{}", e.to_line()).map_err(|er| PipelineError::io(path, er))?;
            }
            Ok(())
        })
    }

    /// Hash over the deterministic fields (wall times excluded), so resumed
    /// and uninterrupted studies agree.
    pub fn content_hash(&self) -> u64 {
        let mut lines: Vec<String> = self
            .entries
            .iter()
            .map(|e| {
                format!(
                    "{}|{}|{}|{}|{:016x}|{:?}|{:?}|{:?}|{:?}|{:?}",
                    e.label,
                    e.seed,
                    e.status.as_str(),
                    e.ckpt,
                    e.ckpt_hash,
                    e.worst,
                    e.spatial,
                    e.temporal,
                    e.autocorr,
                    e.extrema
                )
            })
            .collect();
        lines.sort();
        let mut h = Fnv1a::new();
        for l in lines {
            h.update(l.as_bytes());
            h.update(b"\n");
        }
        h.finish()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tmp(name: &str) -> PathBuf {
        let dir = std::env::temp_dir().join(format!("heap-man-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        dir.join(name)
    }

    fn entry(label: &str, seed: u64) -> ManifestEntry {
        ManifestEntry {
            label: label.into(),
            seed,
            status: RealizationStatus::Evaluated,
            ckpt: format!("pred-{label}-s{seed}.ckpt"),
            ckpt_hash: 0x1234,
            worst: Some(0.5),
            spatial: Some(0.1),
            temporal: Some(0.5),
            autocorr: Some(0.2),
            extrema: Some(0.05),
            train_secs: 12.5,
        }
    }

    #[test]
    fn round_trip_and_upsert() {
        let p = tmp("m.txt");
        let _ = std::fs::remove_file(&p);
        let mut m = Manifest::load_or_new(&p).unwrap();
        m.upsert(entry("H3", 2)).unwrap();
        m.upsert(entry("H3", 12)).unwrap();
        let mut e = entry("H3", 2);
        e.train_secs = 99.0;
        m.upsert(e).unwrap();

        let back = Manifest::load_or_new(&p).unwrap();
        assert_eq!(back.entries.len(), 2);
        assert_eq!(back.get("H3", 2).unwrap().train_secs, 99.0);
        assert_eq!(back.get("H3", 12).unwrap().worst, Some(0.5));
    }

    #[test]
    fn content_hash_ignores_wall_time_and_order() {
        let p = tmp("h1.txt");
        let _ = std::fs::remove_file(&p);
        let mut a = Manifest::load_or_new(&p).unwrap();
        a.upsert(entry("H1", 2)).unwrap();
        a.upsert(entry("H1", 12)).unwrap();

        let p2 = tmp("h2.txt");
        let _ = std::fs::remove_file(&p2);
        let mut b = Manifest::load_or_new(&p2).unwrap();
        let mut e12 = entry("H1", 12);
        e12.train_secs = 1000.0;
        b.upsert(e12).unwrap();
        b.upsert(entry("H1", 2)).unwrap();

        assert_eq!(a.content_hash(), b.content_hash());
    }
}
