//! JSON experiment configs with strict key checking.
//!
//! The file mirrors the experiment config field names in snake_case. Unknown
//! keys are rejected, both in the file and in `--set` overrides — a silently
//! misspelled hyperparameter would invalidate an experiment.

use std::path::Path;

use serde::{Deserialize, Serialize};
use trimsgd::data::DatasetName;
use trimsgd::harness::ExperimentConfig;
use trimsgd::model::Arch;
use trimsgd::optimize::{OptimizerKind, ScheduleKind};
use trimsgd::regularize::TrimSchedule;

use crate::CliError;

/// On-disk schema: the experiment fields plus optional sweep grids and the
/// adaptive-optimizer learning rate used by `compare`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub dataset: DatasetName,
    pub arch: Arch,
    pub optimizer: OptimizerKind,
    pub eta0: f64,
    pub lr_schedule: ScheduleKind,
    pub batch_size: usize,
    pub epochs: usize,
    pub momentum: f64,
    pub weight_decay: f64,
    pub rho: f64,
    pub eps: f64,
    pub trim_schedule: TrimSchedule,
    pub trials: usize,
    pub base_seed: u64,
    #[serde(default)]
    pub train_subset: Option<usize>,
    /// Noise grid for `sweep`; defaults to {0, 2.5, 5, 7.5, 10, 15} percent.
    #[serde(default)]
    pub rho_grid: Option<Vec<f64>>,
    /// Trim grid for `sweep`; defaults to the single configured `eps`.
    #[serde(default)]
    pub eps_grid: Option<Vec<f64>>,
    /// Initial learning rate for the RMSprop/Adam arms of `compare`
    /// (adaptive methods run on a constant schedule); defaults to 0.001.
    #[serde(default)]
    pub adaptive_eta0: Option<f64>,
}

const KNOWN_KEYS: &[&str] = &[
    "dataset",
    "arch",
    "optimizer",
    "eta0",
    "lr_schedule",
    "batch_size",
    "epochs",
    "momentum",
    "weight_decay",
    "rho",
    "eps",
    "trim_schedule",
    "trials",
    "base_seed",
    "train_subset",
    "rho_grid",
    "eps_grid",
    "adaptive_eta0",
];

impl FileConfig {
    pub fn experiment(&self) -> ExperimentConfig {
        ExperimentConfig {
            dataset: self.dataset,
            arch: self.arch,
            optimizer: self.optimizer,
            eta0: self.eta0,
            lr_schedule: self.lr_schedule,
            batch_size: self.batch_size,
            epochs: self.epochs,
            momentum: self.momentum,
            weight_decay: self.weight_decay,
            rho: self.rho,
            eps: self.eps,
            trim_schedule: self.trim_schedule,
            trials: self.trials,
            base_seed: self.base_seed,
            train_subset: self.train_subset,
        }
    }

    pub fn rho_grid(&self) -> Vec<f64> {
        self.rho_grid
            .clone()
            .unwrap_or_else(|| vec![0.0, 0.025, 0.05, 0.075, 0.10, 0.15])
    }

    pub fn eps_grid(&self) -> Vec<f64> {
        self.eps_grid.clone().unwrap_or_else(|| vec![self.eps])
    }

    pub fn adaptive_eta0(&self) -> f64 {
        self.adaptive_eta0.unwrap_or(0.001)
    }
}

/// A `key=value` override string split and checked against the schema.
fn parse_override(raw: &str) -> Result<(String, serde_json::Value), CliError> {
    let (key, value) = raw
        .split_once('=')
        .ok_or_else(|| CliError::Usage(format!("--set expects KEY=VALUE, got `{raw}`")))?;
    if !KNOWN_KEYS.contains(&key) {
        return Err(CliError::Usage(format!(
            "unknown config key `{key}` in --set"
        )));
    }
    // Bare words become strings so enum values don't need JSON quoting.
    let parsed = serde_json::from_str::<serde_json::Value>(value)
        .unwrap_or_else(|_| serde_json::Value::String(value.to_string()));
    Ok((key.to_string(), parsed))
}

/// Loads a config file and applies overrides, strictly.
pub fn load_config(path: &Path, overrides: &[String]) -> Result<FileConfig, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| {
        CliError::Io(std::io::Error::new(
            e.kind(),
            format!("cannot read config {}: {e}", path.display()),
        ))
    })?;
    let mut value: serde_json::Value =
        serde_json::from_str(&text).map_err(|source| CliError::Json {
            path: path.display().to_string(),
            source,
        })?;
    let map = value
        .as_object_mut()
        .ok_or_else(|| CliError::Usage("config file must be a JSON object".into()))?;

    for raw in overrides {
        let (key, parsed) = parse_override(raw)?;
        map.insert(key, parsed);
    }

    serde_json::from_value(value).map_err(|source| CliError::Json {
        path: path.display().to_string(),
        source,
    })
}
