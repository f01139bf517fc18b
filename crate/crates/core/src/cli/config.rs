//! Experiment configuration files.
//!
//! TOML with one table per concern. Every table rejects unknown keys and
//! every key has a default, so an empty file is a valid configuration:
//!
//! ```toml
//! [run]
//! seed = 7
//! rounds = 500
//! output_dir = "runs/static"
//! metrics_format = "jsonl"
//!
//! [task]
//! preset = "default"
//!
//! [strategy]
//! kind = "id"
//!
//! [train]
//! learning_rate = 10.0
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::advantage::DEFAULT_DELTA;
use crate::clipping::ClipMode;
use crate::scheduler::StrategyConfig;
use crate::taskpolicy::{PolicyInit, RewardMode, TaskSpec};
use crate::trainer::{EvalConfig, Intervention, Optimizer, TrainConfig, DEFAULT_LEARNING_RATE};

/// Relative output directories are resolved against this variable when set.
pub const OUTPUT_ROOT_ENV: &str = "GPCLIP_OUTPUT_ROOT";

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("cannot parse config {path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MetricsFormat {
    #[default]
    Jsonl,
    Csv,
}

impl MetricsFormat {
    pub fn extension(self) -> &'static str {
        match self {
            MetricsFormat::Jsonl => "jsonl",
            MetricsFormat::Csv => "csv",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunSection {
    pub seed: u64,
    pub rounds: u64,
    pub output_dir: PathBuf,
    pub metrics_format: MetricsFormat,
    /// Adds wall-clock seconds to every row. Off by default so that reruns
    /// produce identical files.
    pub record_wall_clock: bool,
}

impl Default for RunSection {
    fn default() -> Self {
        Self {
            seed: 7,
            rounds: 500,
            output_dir: PathBuf::from("runs/default"),
            metrics_format: MetricsFormat::Jsonl,
            record_wall_clock: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratedTask {
    pub n_contexts: usize,
    pub vocab: usize,
    pub horizon: usize,
    pub targets_per_context: usize,
    pub reward_mode: RewardMode,
    pub seed: u64,
}

/// Either a named preset or a randomly generated task, never both.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TaskSection {
    pub preset: Option<String>,
    pub generate: Option<GeneratedTask>,
    pub reward_noise: f64,
}

impl Default for TaskSection {
    fn default() -> Self {
        Self {
            preset: Some("default".into()),
            generate: None,
            reward_noise: 0.0,
        }
    }
}

impl TaskSection {
    pub fn build(&self) -> Result<TaskSpec, ConfigError> {
        let invalid = |e: crate::taskpolicy::TaskError| ConfigError::Invalid(e.to_string());
        let task = match (&self.preset, &self.generate) {
            (Some(name), None) => TaskSpec::preset(name).map_err(invalid)?,
            (None, Some(g)) => TaskSpec::generate(
                g.n_contexts,
                g.vocab,
                g.horizon,
                g.targets_per_context,
                g.reward_mode,
                g.seed,
            )
            .map_err(invalid)?,
            (None, None) => TaskSpec::preset("default").map_err(invalid)?,
            (Some(_), Some(_)) => {
                return Err(ConfigError::Invalid(
                    "[task] takes either `preset` or `generate`, not both".into(),
                ))
            }
        };
        task.with_reward_noise(self.reward_noise).map_err(invalid)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PolicySection {
    pub init: PolicyInit,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSection {
    pub learning_rate: f64,
    pub epochs: usize,
    pub minibatches: usize,
    pub group_size: usize,
    pub clip_mode: ClipMode,
    pub adv_delta: f64,
    pub optimizer: Optimizer,
}

impl Default for TrainSection {
    fn default() -> Self {
        Self {
            learning_rate: DEFAULT_LEARNING_RATE,
            epochs: 4,
            minibatches: 4,
            group_size: 8,
            clip_mode: ClipMode::HardClip,
            adv_delta: DEFAULT_DELTA,
            optimizer: Optimizer::Sgd,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub run: RunSection,
    pub task: TaskSection,
    pub policy: PolicySection,
    pub strategy: StrategyConfig,
    pub train: TrainSection,
    pub intervention: Option<Intervention>,
    pub eval: Option<EvalConfig>,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, String> {
        toml::from_str(text).map_err(|e| e.to_string())
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml(&text).map_err(|message| ConfigError::Parse {
            path: path.to_path_buf(),
            message,
        })
    }

    /// Every field spelled out, defaults included. Parsing the result gives
    /// back `self`.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration is representable as TOML")
    }

    pub fn train_config(&self) -> Result<TrainConfig, ConfigError> {
        let mut cfg = TrainConfig::new(self.task.build()?);
        cfg.init = self.policy.init;
        cfg.strategy = self.strategy;
        cfg.learning_rate = self.train.learning_rate;
        cfg.epochs = self.train.epochs;
        cfg.minibatches = self.train.minibatches;
        cfg.rounds = self.run.rounds;
        cfg.group_size = self.train.group_size;
        cfg.seed = self.run.seed;
        cfg.clip_mode = self.train.clip_mode;
        cfg.adv_delta = self.train.adv_delta;
        cfg.optimizer = self.train.optimizer;
        cfg.intervention = self.intervention.clone();
        cfg.eval = self.eval;
        cfg.record_wall_clock = self.run.record_wall_clock;
        cfg.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        Ok(cfg)
    }

    /// Output directory after applying [`OUTPUT_ROOT_ENV`].
    pub fn resolved_output_dir(&self) -> PathBuf {
        resolve_output_dir(&self.run.output_dir, std::env::var_os(OUTPUT_ROOT_ENV).map(PathBuf::from))
    }

    pub fn metrics_file_name(&self) -> String {
        format!("metrics.{}", self.run.metrics_format.extension())
    }
}

pub fn resolve_output_dir(dir: &Path, root: Option<PathBuf>) -> PathBuf {
    match root {
        Some(root) if dir.is_relative() => root.join(dir),
        _ => dir.to_path_buf(),
    }
}
