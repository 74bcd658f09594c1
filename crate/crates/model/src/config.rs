//! Model, training and evaluation settings, plus a loader for flat config
//! files (`key = value` lines or a JSON object).

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::{ModelError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    /// Two consecutive clause queries.
    Cascaded,
    /// Self-attention over every clause pair.
    Full,
    /// Anchor variable first, then positive-by-negative clause grid.
    Anchored,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EmbedMode {
    Static,
    Dynamic,
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Variant::Cascaded => "cascaded",
            Variant::Full => "full",
            Variant::Anchored => "anchored",
        })
    }
}

impl fmt::Display for EmbedMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EmbedMode::Static => "static",
            EmbedMode::Dynamic => "dynamic",
        })
    }
}

impl FromStr for Variant {
    type Err = ModelError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cascaded" | "casc" => Ok(Variant::Cascaded),
            "full" => Ok(Variant::Full),
            "anchored" | "anch" => Ok(Variant::Anchored),
            _ => Err(ModelError::Config(format!("unknown variant {s:?}"))),
        }
    }
}

impl FromStr for EmbedMode {
    type Err = ModelError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "static" => Ok(EmbedMode::Static),
            "dynamic" => Ok(EmbedMode::Dynamic),
            _ => Err(ModelError::Config(format!("unknown embedding mode {s:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub d: usize,
    /// Message-passing rounds for the initial embedding.
    pub rounds: usize,
    pub variant: Variant,
    pub mode: EmbedMode,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            d: 32,
            rounds: 8,
            variant: Variant::Full,
            mode: EmbedMode::Dynamic,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.d == 0 {
            return Err(ModelError::Config("d must be positive".into()));
        }
        if self.rounds == 0 {
            return Err(ModelError::Config("rounds must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub lr: f64,
    pub gamma: f64,
    pub clip_norm: f64,
    /// Greedy derivations per SAT episode, further capped by the variable count.
    pub sat_step_cap: usize,
    pub seed: u64,
    /// Stop once an epoch's running teacher-forced top-1 accuracy reaches this.
    pub target_accuracy: Option<f64>,
    /// Training epochs between bootstrap passes.
    pub epochs_per_pass: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 50,
            lr: 1e-3,
            gamma: 0.99,
            clip_norm: 0.5,
            sat_step_cap: 16,
            seed: 0,
            target_accuracy: None,
            epochs_per_pass: 5,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(ModelError::Config(format!("gamma {} outside (0, 1]", self.gamma)));
        }
        if self.lr <= 0.0 {
            return Err(ModelError::Config("lr must be positive".into()));
        }
        if self.clip_norm <= 0.0 {
            return Err(ModelError::Config("clip_norm must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalConfig {
    /// Resolution steps executed per selector forward pass.
    pub k: usize,
    /// Derivation budget as a multiple of the teacher proof length.
    pub ratio: usize,
    /// Derivation budget when no teacher proof is known.
    pub flat_cap: usize,
    /// SAT decode attempts per variable.
    pub trial_factor: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            k: 1,
            ratio: 4,
            flat_cap: 1000,
            trial_factor: 2,
        }
    }
}

/// Everything a CLI invocation can set from a config file or `--set`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Settings {
    pub d: Option<usize>,
    pub rounds: Option<usize>,
    pub variant: Option<Variant>,
    pub mode: Option<EmbedMode>,
    pub epochs: Option<usize>,
    pub lr: Option<f64>,
    pub gamma: Option<f64>,
    pub clip_norm: Option<f64>,
    pub sat_step_cap: Option<usize>,
    pub seed: Option<u64>,
    pub target_accuracy: Option<f64>,
    pub epochs_per_pass: Option<usize>,
    pub k: Option<usize>,
    pub ratio: Option<usize>,
    pub flat_cap: Option<usize>,
    pub trial_factor: Option<usize>,
}

impl Settings {
    pub fn model(&self) -> ModelConfig {
        let def = ModelConfig::default();
        ModelConfig {
            d: self.d.unwrap_or(def.d),
            rounds: self.rounds.unwrap_or(def.rounds),
            variant: self.variant.unwrap_or(def.variant),
            mode: self.mode.unwrap_or(def.mode),
        }
    }

    pub fn train(&self) -> TrainConfig {
        let def = TrainConfig::default();
        TrainConfig {
            epochs: self.epochs.unwrap_or(def.epochs),
            lr: self.lr.unwrap_or(def.lr),
            gamma: self.gamma.unwrap_or(def.gamma),
            clip_norm: self.clip_norm.unwrap_or(def.clip_norm),
            sat_step_cap: self.sat_step_cap.unwrap_or(def.sat_step_cap),
            seed: self.seed.unwrap_or(def.seed),
            target_accuracy: self.target_accuracy.or(def.target_accuracy),
            epochs_per_pass: self.epochs_per_pass.unwrap_or(def.epochs_per_pass),
        }
    }

    pub fn eval(&self) -> EvalConfig {
        let def = EvalConfig::default();
        EvalConfig {
            k: self.k.unwrap_or(def.k),
            ratio: self.ratio.unwrap_or(def.ratio),
            flat_cap: self.flat_cap.unwrap_or(def.flat_cap),
            trial_factor: self.trial_factor.unwrap_or(def.trial_factor),
        }
    }

    /// Parses a JSON object or `key = value` lines (`#` starts a comment).
    pub fn parse(text: &str) -> Result<Self> {
        let trimmed = text.trim_start();
        let map = if trimmed.starts_with('{') {
            match serde_json::from_str::<Value>(text)? {
                Value::Object(m) => m,
                _ => return Err(ModelError::Config("config JSON must be an object".into())),
            }
        } else {
            let mut m = Map::new();
            for (no, line) in text.lines().enumerate() {
                let line = line.split('#').next().unwrap().trim();
                if line.is_empty() {
                    continue;
                }
                let (k, v) = line
                    .split_once('=')
                    .ok_or_else(|| ModelError::Config(format!("line {}: expected key = value", no + 1)))?;
                m.insert(k.trim().to_string(), scalar(v.trim()));
            }
            m
        };
        Ok(serde_json::from_value(Value::Object(map))?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Settings::parse(&std::fs::read_to_string(path)?)
    }

    /// Applies `key=value` overrides on top of the current values.
    pub fn apply_overrides<'a>(&self, pairs: impl IntoIterator<Item = &'a str>) -> Result<Self> {
        let mut map = match serde_json::to_value(self)? {
            Value::Object(m) => m,
            _ => unreachable!(),
        };
        for pair in pairs {
            let (k, v) = pair
                .split_once('=')
                .ok_or_else(|| ModelError::Config(format!("override {pair:?} is not key=value")))?;
            map.insert(k.trim().to_string(), scalar(v.trim()));
        }
        Ok(serde_json::from_value(Value::Object(map))?)
    }
}

/// Numbers and booleans become JSON scalars; anything else stays a string.
fn scalar(v: &str) -> Value {
    let v = v.trim_matches('"');
    serde_json::from_str::<Value>(v)
        .ok()
        .filter(|x| x.is_number() || x.is_boolean() || x.is_null())
        .unwrap_or_else(|| Value::String(v.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn key_value_and_json_agree() {
        let a = Settings::parse("d = 16\nvariant = anchored # comment\nlr=0.002\n").unwrap();
        let b = Settings::parse(r#"{"d": 16, "variant": "anchored", "lr": 0.002}"#).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.model().d, 16);
        assert_eq!(a.model().variant, Variant::Anchored);
        assert_eq!(a.model().mode, EmbedMode::Dynamic);
    }

    #[test]
    fn overrides_win_and_unknown_keys_fail() {
        let a = Settings::parse("d = 16\n").unwrap();
        let b = a.apply_overrides(["d=8", "mode=static"]).unwrap();
        assert_eq!(b.model().d, 8);
        assert_eq!(b.model().mode, EmbedMode::Static);
        assert!(Settings::parse("dd = 3").is_err());
        assert!(a.apply_overrides(["nonsense"]).is_err());
    }

    #[test]
    fn train_config_validation() {
        let mut c = TrainConfig::default();
        assert!(c.validate().is_ok());
        c.gamma = 0.0;
        assert!(c.validate().is_err());
        c.gamma = 1.0;
        c.lr = 0.0;
        assert!(c.validate().is_err());
    }
}
