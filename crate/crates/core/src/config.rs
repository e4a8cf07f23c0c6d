//! Training configuration and its flat `key = value` text form.
//!
//! ```text
//! # comments and blank lines are ignored
//! gamma = 0.3
//! batch_size_schedule = 1-3:2,4-9:5
//! lr_schedule = 1-4:3e-3,5:1e-3,6:3e-4,7-9:1e-4
//! ```
//!
//! Keys not present keep their defaults; unknown keys are rejected.

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use thiserror::Error;

use crate::evaluation::Combine;
use crate::network::NetConfig;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("line {line}: expected `key = value`, got {text:?}")]
    Syntax { line: usize, text: String },
    #[error("unknown configuration key `{0}`")]
    UnknownKey(String),
    #[error("invalid value {value:?} for `{key}`: {reason}")]
    Value {
        key: String,
        value: String,
        reason: String,
    },
    #[error("inconsistent configuration: {0}")]
    Invalid(String),
    #[error("reading {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

/// Piecewise-constant per-epoch schedule. Epochs are 1-based; epochs past the
/// last range keep the last value.
#[derive(Debug, Clone, PartialEq)]
pub struct Schedule<T> {
    entries: Vec<(usize, usize, T)>,
}

impl<T: Copy> Schedule<T> {
    pub fn new(entries: Vec<(usize, usize, T)>) -> Self {
        assert!(!entries.is_empty(), "schedule needs at least one entry");
        Schedule { entries }
    }

    pub fn constant(value: T) -> Self {
        Schedule::new(vec![(1, 1, value)])
    }

    pub fn at(&self, epoch: usize) -> T {
        self.entries
            .iter()
            .find(|(first, last, _)| (*first..=*last).contains(&epoch))
            .or_else(|| self.entries.iter().filter(|(_, last, _)| *last < epoch).max_by_key(|e| e.1))
            .unwrap_or(&self.entries[0])
            .2
    }

    pub fn entries(&self) -> &[(usize, usize, T)] {
        &self.entries
    }
}

impl<T: fmt::Display> fmt::Display for Schedule<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, (first, last, v)) in self.entries.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            if first == last {
                write!(f, "{first}:{v}")?;
            } else {
                write!(f, "{first}-{last}:{v}")?;
            }
        }
        Ok(())
    }
}

impl<T: FromStr + Copy> FromStr for Schedule<T> {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut entries = Vec::new();
        for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let (range, value) = part
                .split_once(':')
                .ok_or_else(|| format!("entry {part:?} lacks `epochs:value`"))?;
            let (first, last) = match range.split_once('-') {
                Some((a, b)) => (a.trim(), b.trim()),
                None => (range.trim(), range.trim()),
            };
            let first: usize = first.parse().map_err(|_| format!("bad epoch {first:?}"))?;
            let last: usize = last.parse().map_err(|_| format!("bad epoch {last:?}"))?;
            if first == 0 || last < first {
                return Err(format!("bad epoch range {range:?}"));
            }
            let value = value.trim().parse().map_err(|_| format!("bad value {value:?}"))?;
            entries.push((first, last, value));
        }
        if entries.is_empty() {
            return Err("empty schedule".into());
        }
        Ok(Schedule { entries })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    /// Quantile order of the point forecast.
    pub q_star: f64,
    pub q_low: f64,
    pub q_up: f64,
    /// Weight of the interval terms in the loss.
    pub gamma: f64,
    /// Loss-collecting daily steps per walk.
    pub steps_per_batch: usize,
    pub updates_per_epoch: usize,
    pub epochs: usize,
    pub batch_size: Schedule<usize>,
    pub learning_rate: Schedule<f64>,
    pub warmup_train_weeks: usize,
    pub warmup_test_weeks: usize,
    pub seed: u64,
    pub alpha_logit_init: f64,
    pub beta_logit_init: f64,
    pub net: NetConfig,
    /// Global gradient-norm clip; off when `None`.
    pub grad_clip: Option<f64>,
    pub ensemble_members: usize,
    pub ensemble_combine: Combine,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            q_star: 0.485,
            q_low: 0.035,
            q_up: 0.96,
            gamma: 0.3,
            steps_per_batch: 50,
            updates_per_epoch: 2500,
            epochs: 9,
            batch_size: Schedule::new(vec![(1, 3, 2), (4, 9, 5)]),
            learning_rate: Schedule::new(vec![(1, 4, 3e-3), (5, 5, 1e-3), (6, 6, 3e-4), (7, 9, 1e-4)]),
            warmup_train_weeks: 3,
            warmup_test_weeks: 5,
            seed: 0,
            alpha_logit_init: -3.5,
            beta_logit_init: -3.5,
            net: NetConfig::default(),
            grad_clip: None,
            ensemble_members: 5,
            ensemble_combine: Combine::Mean,
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T, ConfigError> {
    value.parse().map_err(|_| ConfigError::Value {
        key: key.into(),
        value: value.into(),
        reason: format!("expected {}", std::any::type_name::<T>()),
    })
}

impl TrainConfig {
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        let sched_err = |reason: String| ConfigError::Value {
            key: key.into(),
            value: value.into(),
            reason,
        };
        match key {
            "q_star" => self.q_star = parse(key, value)?,
            "q_low" => self.q_low = parse(key, value)?,
            "q_up" => self.q_up = parse(key, value)?,
            "gamma" => self.gamma = parse(key, value)?,
            "steps_per_batch" => self.steps_per_batch = parse(key, value)?,
            "updates_per_epoch" => self.updates_per_epoch = parse(key, value)?,
            "epochs" => self.epochs = parse(key, value)?,
            "batch_size_schedule" => self.batch_size = value.parse().map_err(sched_err)?,
            "lr_schedule" => self.learning_rate = value.parse().map_err(sched_err)?,
            "warmup_train_weeks" => self.warmup_train_weeks = parse(key, value)?,
            "warmup_test_weeks" => self.warmup_test_weeks = parse(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            "alpha_logit_init" => self.alpha_logit_init = parse(key, value)?,
            "beta_logit_init" => self.beta_logit_init = parse(key, value)?,
            "state_size" => self.net.state_size = parse(key, value)?,
            "control_size" => self.net.control_size = parse(key, value)?,
            "output_size" => self.net.output_size = parse(key, value)?,
            "embedding_dim" => self.net.embedding_dim = parse(key, value)?,
            "shortcuts" => self.net.shortcuts = parse(key, value)?,
            "grad_clip" => {
                self.grad_clip = match value {
                    "none" | "off" => None,
                    v => Some(parse(key, v)?),
                }
            }
            "ensemble_members" => self.ensemble_members = parse(key, value)?,
            "ensemble_combine" => self.ensemble_combine = value.parse().map_err(sched_err)?,
            _ => return Err(ConfigError::UnknownKey(key.into())),
        }
        Ok(())
    }

    /// Applies `key = value` lines on top of the current values.
    pub fn apply_text(&mut self, text: &str) -> Result<(), ConfigError> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| ConfigError::Syntax {
                line: i + 1,
                text: raw.into(),
            })?;
            self.set(k.trim(), v.trim())?;
        }
        Ok(())
    }

    pub fn from_text(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = TrainConfig::default();
        cfg.apply_text(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        let text = fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_text(&text)
    }

    /// Text form readable by [`TrainConfig::from_text`].
    pub fn to_text(&self) -> String {
        let clip = self.grad_clip.map_or("none".to_string(), |c| format!("{c:?}"));
        [
            format!("q_star = {:?}", self.q_star),
            format!("q_low = {:?}", self.q_low),
            format!("q_up = {:?}", self.q_up),
            format!("gamma = {:?}", self.gamma),
            format!("steps_per_batch = {}", self.steps_per_batch),
            format!("updates_per_epoch = {}", self.updates_per_epoch),
            format!("epochs = {}", self.epochs),
            format!("batch_size_schedule = {}", self.batch_size),
            format!("lr_schedule = {}", self.learning_rate),
            format!("warmup_train_weeks = {}", self.warmup_train_weeks),
            format!("warmup_test_weeks = {}", self.warmup_test_weeks),
            format!("seed = {}", self.seed),
            format!("alpha_logit_init = {:?}", self.alpha_logit_init),
            format!("beta_logit_init = {:?}", self.beta_logit_init),
            format!("state_size = {}", self.net.state_size),
            format!("control_size = {}", self.net.control_size),
            format!("output_size = {}", self.net.output_size),
            format!("embedding_dim = {}", self.net.embedding_dim),
            format!("shortcuts = {}", self.net.shortcuts),
            format!("grad_clip = {clip}"),
            format!("ensemble_members = {}", self.ensemble_members),
            format!("ensemble_combine = {}", self.ensemble_combine),
        ]
        .join("\n")
            + "\n"
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: String| Err(ConfigError::Invalid(m));
        if !(0.0 < self.q_low && self.q_low < self.q_star && self.q_star < self.q_up && self.q_up < 1.0) {
            return bad(format!(
                "quantiles must satisfy 0 < q_low < q_star < q_up < 1 (got {}, {}, {})",
                self.q_low, self.q_star, self.q_up
            ));
        }
        if !(self.gamma >= 0.0) {
            return bad(format!("gamma must be >= 0, got {}", self.gamma));
        }
        if self.steps_per_batch == 0 || self.updates_per_epoch == 0 || self.epochs == 0 {
            return bad("steps_per_batch, updates_per_epoch and epochs must be positive".into());
        }
        if self.warmup_test_weeks == 0 {
            return bad("warmup_test_weeks must be positive".into());
        }
        if self.batch_size.entries().iter().any(|e| e.2 == 0) {
            return bad("batch sizes must be positive".into());
        }
        if self.learning_rate.entries().iter().any(|e| !(e.2 > 0.0)) {
            return bad("learning rates must be positive".into());
        }
        if self.ensemble_members == 0 {
            return bad("ensemble_members must be positive".into());
        }
        self.net.validate().map_err(|e| ConfigError::Invalid(e.to_string()))
    }
}
