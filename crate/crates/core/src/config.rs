//! Run configuration assembled from defaults, an optional `key = value`
//! file and command-line flags, applied in that order.

use std::path::PathBuf;

use thiserror::Error;

use crate::dataset::{Schema, SplitSpec};
use crate::lm::{DampingMode, LmConfig};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("config line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("unknown config key `{0}`")]
    UnknownKey(String),
    #[error("invalid value {value:?} for `{key}`: {reason}")]
    InvalidValue {
        key: String,
        value: String,
        reason: String,
    },
    #[error("{0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub schema: Schema,
    pub hidden: Vec<usize>,
    pub lm: LmConfig,
    pub split: SplitSpec,
    pub threshold: f64,
    pub seed: u64,
    pub data: Option<PathBuf>,
    pub model: Option<PathBuf>,
    pub out_dir: PathBuf,
    pub out: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            schema: Schema::heart_failure(),
            hidden: vec![6],
            lm: LmConfig::default(),
            split: SplitSpec::default(),
            threshold: 0.5,
            seed: 1,
            data: None,
            model: None,
            out_dir: PathBuf::from("."),
            out: None,
        }
    }
}

/// Parses `key = value` lines; `#` starts a comment.
pub fn parse_config_text(text: &str) -> Result<Vec<(String, String)>, ConfigError> {
    let mut pairs = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| ConfigError::Syntax {
            line: i + 1,
            message: format!("expected `key = value`, got {line:?}"),
        })?;
        pairs.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(pairs)
}

fn parse_list<T: std::str::FromStr>(key: &str, value: &str) -> Result<Vec<T>, ConfigError> {
    value
        .split(',')
        .map(|s| s.trim().parse::<T>())
        .collect::<Result<Vec<_>, _>>()
        .map_err(|_| invalid(key, value, "expected a comma-separated list of numbers"))
}

fn invalid(key: &str, value: &str, reason: impl Into<String>) -> ConfigError {
    ConfigError::InvalidValue {
        key: key.to_string(),
        value: value.to_string(),
        reason: reason.into(),
    }
}

fn parse_bool(key: &str, value: &str) -> Result<bool, ConfigError> {
    match value.to_ascii_lowercase().as_str() {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(invalid(key, value, "expected true or false")),
    }
}

impl RunConfig {
    /// Applies `pairs` in order on top of the defaults. Keys accept either
    /// `-` or `_` as separator.
    pub fn from_pairs(pairs: &[(String, String)]) -> Result<Self, ConfigError> {
        let mut cfg = RunConfig::default();
        let mut features: Option<Vec<String>> = None;
        let mut label: Option<String> = None;
        let mut positive_label = 1.0;

        for (key, value) in pairs {
            let key = key.replace('_', "-");
            let value = value.as_str();
            let num = |v: &str| {
                v.parse::<f64>()
                    .map_err(|_| invalid(&key, v, "expected a number"))
            };
            match key.as_str() {
                "data" => cfg.data = Some(PathBuf::from(value)),
                "model" => cfg.model = Some(PathBuf::from(value)),
                "out-dir" => cfg.out_dir = PathBuf::from(value),
                "out" => cfg.out = Some(PathBuf::from(value)),
                "seed" => {
                    cfg.seed = value
                        .parse()
                        .map_err(|_| invalid(&key, value, "expected a non-negative integer"))?
                }
                "threshold" => cfg.threshold = num(value)?,
                "hidden" => {
                    cfg.hidden = if value.is_empty() {
                        Vec::new()
                    } else {
                        parse_list(&key, value)?
                    }
                }
                "mode" => {
                    cfg.lm.mode = value
                        .parse::<DampingMode>()
                        .map_err(|reason| invalid(&key, value, reason))?
                }
                "lambda0" => cfg.lm.lambda0 = num(value)?,
                "max-iters" => {
                    cfg.lm.max_iterations = value
                        .parse()
                        .map_err(|_| invalid(&key, value, "expected a non-negative integer"))?
                }
                "split" => {
                    let fr: Vec<f64> = parse_list(&key, value)?;
                    let [train, val, test] = fr[..] else {
                        return Err(invalid(&key, value, "expected three fractions"));
                    };
                    cfg.split.train_fraction = train;
                    cfg.split.val_fraction = val;
                    cfg.split.test_fraction = test;
                }
                "no-stratify" => cfg.split.stratified = !parse_bool(&key, value)?,
                "features" => {
                    features = Some(value.split(',').map(|s| s.trim().to_string()).collect())
                }
                "label" => label = Some(value.to_string()),
                "positive-label" => positive_label = num(value)?,
                _ => return Err(ConfigError::UnknownKey(key)),
            }
        }

        if features.is_some() || label.is_some() || positive_label != 1.0 {
            let default = Schema::heart_failure();
            cfg.schema = Schema::with_positive_label(
                features.unwrap_or_else(|| default.feature_columns().to_vec()),
                label.unwrap_or_else(|| default.label_column().to_string()),
                positive_label,
            )
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        }
        cfg.split.seed = cfg.seed;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if let Some(i) = self.hidden.iter().position(|&h| h == 0) {
            return Err(ConfigError::Invalid(format!("hidden layer {i} has size 0")));
        }
        if !self.threshold.is_finite() {
            return Err(ConfigError::Invalid(format!(
                "threshold {} is not finite",
                self.threshold
            )));
        }
        self.lm
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        self.split
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))
    }

    /// `[inputs, hidden..., 1]`
    pub fn layer_sizes(&self) -> Vec<usize> {
        let mut sizes = Vec::with_capacity(self.hidden.len() + 2);
        sizes.push(self.schema.num_features());
        sizes.extend_from_slice(&self.hidden);
        sizes.push(1);
        sizes
    }
}
