use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use super::corpus::SynthConfig;
use crate::error::{Error, Result};
use crate::features::MfccConfig;
use crate::gmm::TrainConfig;
use crate::usable::DetectionConfig;

/// Everything one evaluation run depends on. Loadable from JSON or from
/// `key=value` lines where nested fields use dotted keys
/// (`detection.amp_threshold=0.3`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub corpus_root: PathBuf,
    /// Speakers to use; empty means every speaker in the manifest.
    pub speakers: Vec<String>,
    pub train_files: usize,
    pub test_files: usize,
    pub tir_grid: Vec<f64>,
    pub detection: DetectionConfig,
    pub features: MfccConfig,
    pub gmm: TrainConfig,
    /// Only used when generating a synthetic corpus.
    pub synth: SynthConfig,
    pub seed: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            corpus_root: PathBuf::from("corpus"),
            speakers: Vec::new(),
            train_files: 5,
            test_files: 5,
            tir_grid: vec![-20.0, -10.0, -5.0, 0.0, 5.0, 10.0, 20.0],
            detection: DetectionConfig::default(),
            features: MfccConfig::default(),
            gmm: TrainConfig::default(),
            synth: SynthConfig::default(),
            seed: 0,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.tir_grid.is_empty() || self.tir_grid.iter().any(|t| !t.is_finite()) {
            return Err(Error::InvalidArgument("TIR grid must be nonempty and finite".into()));
        }
        if self.train_files == 0 || self.test_files == 0 {
            return Err(Error::InvalidArgument("need at least one train and one test file".into()));
        }
        self.detection.validate()
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let value = if text.trim_start().starts_with('{') {
            serde_json::from_str(text)?
        } else {
            key_value_to_json(text)?
        };
        let config: Self = serde_json::from_value(value)?;
        config.validate()?;
        Ok(config)
    }

    /// Applies one `key=value` override on top of this config.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let mut current = serde_json::to_value(&*self)?;
        let patch = key_value_to_json(&format!("{key}={value}"))?;
        merge(&mut current, patch);
        *self = serde_json::from_value(current)?;
        Ok(())
    }
}

fn merge(base: &mut Value, patch: Value) {
    match (base, patch) {
        (Value::Object(b), Value::Object(p)) => {
            for (k, v) in p {
                merge(b.entry(k).or_insert(Value::Null), v);
            }
        }
        (b, p) => *b = p,
    }
}

fn parse_scalar(raw: &str) -> Value {
    let raw = raw.trim();
    if let Ok(v) = serde_json::from_str::<Value>(raw) {
        return v;
    }
    // Bare comma lists become arrays: `tir_grid=-20,-10,0`.
    if raw.contains(',') {
        return Value::Array(raw.split(',').map(parse_scalar).collect());
    }
    Value::String(raw.to_string())
}

fn key_value_to_json(text: &str) -> Result<Value> {
    let mut root = Value::Object(Map::new());
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, raw) = line
            .split_once('=')
            .ok_or_else(|| Error::parse("config", format!("line {} has no '='", lineno + 1)))?;
        let mut patch = parse_scalar(raw);
        for part in key.trim().rsplit('.') {
            let mut m = Map::new();
            m.insert(part.to_string(), patch);
            patch = Value::Object(m);
        }
        merge(&mut root, patch);
    }
    Ok(root)
}
