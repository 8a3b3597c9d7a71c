//! Plain-text `key = value` configuration files; `#` starts a comment. Every
//! value is overridable by a CLI flag, so this module only parses and types.

use std::collections::BTreeMap;
use std::path::Path;

use crate::PipelineError;

#[derive(Debug, Clone, Default)]
pub struct KvConfig {
    values: BTreeMap<String, String>,
}

impl KvConfig {
    pub fn parse(text: &str) -> Result<Self, PipelineError> {
        let mut values = BTreeMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                PipelineError::Config(format!("line {}: expected key = value, got '{raw}'", lineno + 1))
            })?;
            values.insert(k.trim().to_string(), v.trim().to_string());
        }
        Ok(Self { values })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, PipelineError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| PipelineError::io(path, e))?;
        Self::parse(&text)
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(|s| s.as_str())
    }

    pub fn get_usize(&self, key: &str) -> Result<Option<usize>, PipelineError> {
        self.typed(key, "integer", |s| s.parse::<usize>().ok())
    }

    pub fn get_u64(&self, key: &str) -> Result<Option<u64>, PipelineError> {
        self.typed(key, "integer", |s| s.parse::<u64>().ok())
    }

    pub fn get_f64(&self, key: &str) -> Result<Option<f64>, PipelineError> {
        self.typed(key, "number", |s| s.parse::<f64>().ok())
    }

    pub fn get_bool(&self, key: &str) -> Result<Option<bool>, PipelineError> {
        self.typed(key, "true/false", |s| match s {
            "true" | "1" | "yes" => Some(true),
            "false" | "0" | "no" => Some(false),
            _ => None,
        })
    }

    fn typed<T>(
        &self,
        key: &str,
        kind: &str,
        parse: impl Fn(&str) -> Option<T>,
    ) -> Result<Option<T>, PipelineError> {
        match self.get(key) {
            None => Ok(None),
            Some(s) => parse(s)
                .map(Some)
                .ok_or_else(|| PipelineError::Config(format!("key '{key}': expected {kind}, got '{s}'"))),
        }
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.values.keys().map(|s| s.as_str())
    }
}
