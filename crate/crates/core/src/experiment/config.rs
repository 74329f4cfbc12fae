use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{ExperimentError, Result};
use crate::contrastive::{AugmentationConfig, DEFAULT_TEMPERATURE};
use crate::datagen::{InjectionSpec, SimSpec, ViewCorruption};
use crate::encoder::{AdamConfig, EncoderArch};
use crate::mining::{DbpmConfig, WeightFunction};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataSource {
    Simulate(SimSpec),
    /// A dataset file written by `simulate` (or converted externally).
    File(PathBuf),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Baseline,
    Dbpm,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Baseline => "baseline",
            Method::Dbpm => "dbpm",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub data: DataSource,
    /// Seed of the train / validation / test shuffle.
    pub split_seed: u64,
    pub encoder: EncoderArch,
    pub augmentation: AugmentationConfig,
    pub method: Method,
    /// `null` disables the noisy threshold.
    pub beta_np: Option<f64>,
    /// `null` disables the faulty threshold.
    pub beta_fp: Option<f64>,
    pub weight_function: WeightFunction,
    pub warmup_epochs: usize,
    pub max_epochs: usize,
    pub probe_epochs: usize,
    pub batch_size: usize,
    pub temperature: f64,
    pub optimizer: AdamConfig,
    pub probe_optimizer: AdamConfig,
    pub seeds: Vec<u64>,
    /// Applied to the training split only.
    pub injection: Option<InjectionSpec>,
    /// Used for over-scaled faulty views when no injection is configured.
    pub view_corruption: ViewCorruption,
    pub output_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let dbpm = DbpmConfig::default();
        Self {
            data: DataSource::Simulate(SimSpec::default()),
            split_seed: 0,
            encoder: EncoderArch::default(),
            augmentation: AugmentationConfig::default(),
            method: Method::Dbpm,
            beta_np: dbpm.beta_np,
            beta_fp: dbpm.beta_fp,
            weight_function: dbpm.weight_function,
            warmup_epochs: dbpm.warmup_epochs,
            max_epochs: 60,
            probe_epochs: 40,
            batch_size: 128,
            temperature: DEFAULT_TEMPERATURE,
            optimizer: AdamConfig::default(),
            probe_optimizer: AdamConfig::with_learning_rate(1e-2),
            seeds: vec![0, 1, 2, 3, 4],
            injection: None,
            view_corruption: ViewCorruption::default(),
            output_dir: PathBuf::from("runs"),
        }
    }
}

impl ExperimentConfig {
    pub fn dbpm(&self) -> DbpmConfig {
        DbpmConfig {
            warmup_epochs: self.warmup_epochs,
            beta_np: self.beta_np,
            beta_fp: self.beta_fp,
            weight_function: self.weight_function,
        }
    }

    pub fn corruption(&self) -> ViewCorruption {
        self.injection.map_or(self.view_corruption, |i| i.scaling)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(ExperimentError::InvalidConfig(m));
        if self.max_epochs == 0 || self.probe_epochs == 0 {
            return bad("epoch counts must be positive".into());
        }
        if self.batch_size < 2 {
            return bad(format!("batch size must be at least 2, got {}", self.batch_size));
        }
        if self.seeds.is_empty() {
            return bad("at least one seed is required".into());
        }
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return bad(format!("temperature must be positive, got {}", self.temperature));
        }
        for b in [self.beta_np, self.beta_fp].into_iter().flatten() {
            if !(b >= 0.0 && b.is_finite()) {
                return bad(format!("beta must be finite and >= 0, got {b}"));
            }
        }
        for (name, opt) in [("optimizer", &self.optimizer), ("probe_optimizer", &self.probe_optimizer)] {
            if !(opt.learning_rate >= 0.0) || !(0.0..1.0).contains(&opt.beta1) || !(0.0..1.0).contains(&opt.beta2) || !(opt.eps > 0.0) {
                return bad(format!("{name} settings out of range: {opt:?}"));
            }
        }
        self.augmentation.validate()?;
        if let Some(inj) = &self.injection {
            inj.validate()?;
        }
        self.view_corruption.validate()?;
        if let DataSource::Simulate(spec) = &self.data {
            spec.validate()?;
        }
        Ok(())
    }

    /// Parses JSON, applies `key=value` overrides on dotted paths and validates.
    pub fn from_json_with_overrides(json: Option<&str>, overrides: &[String]) -> Result<Self> {
        let mut value = match json {
            Some(text) => serde_json::from_str(text).map_err(|e| ExperimentError::InvalidConfig(format!("config JSON: {e}")))?,
            None => Value::Object(Default::default()),
        };
        for o in overrides {
            apply_override(&mut value, o)?;
        }
        let config: Self = serde_json::from_value(value).map_err(|e| ExperimentError::InvalidConfig(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }
}

/// `a.b.c=v`: `v` is read as JSON when it parses (numbers, booleans,
/// `null`, arrays), `none` means `null`, anything else is a string.
pub fn apply_override(root: &mut Value, assignment: &str) -> Result<()> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| ExperimentError::InvalidConfig(format!("override {assignment:?} is not key=value")))?;
    let key = key.trim();
    if key.is_empty() || key.split('.').any(str::is_empty) {
        return Err(ExperimentError::InvalidConfig(format!("bad override key {key:?}")));
    }
    let raw = raw.trim();
    let parsed = if raw.eq_ignore_ascii_case("none") {
        Value::Null
    } else {
        serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()))
    };
    let mut node = root;
    for part in key.split('.') {
        if !node.is_object() {
            *node = Value::Object(Default::default());
        }
        node = node.as_object_mut().expect("object").entry(part.to_string()).or_insert(Value::Null);
    }
    *node = parsed;
    Ok(())
}
