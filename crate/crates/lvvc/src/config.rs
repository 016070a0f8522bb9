//! Run configuration: everything an end-to-end run depends on, with every
//! random seed stated explicitly.

use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use lvvc_core::dlnn::{OutputActivation, TrainConfig};
use lvvc_core::experiments::{Coverage, SimulationConfig};
use lvvc_core::features::PlacementStrategy;
use lvvc_core::impedance::DEFAULT_LOAD_OHM;
use lvvc_core::powerflow::PowerFlowConfig;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fsio;
use crate::timeseries::{parse_timestamp, DEFAULT_START};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Seeds {
    pub demand: u64,
    pub phase: u64,
    /// One placement per seed; the first also seeds key-location phase picks.
    pub placement: Vec<u64>,
    pub model: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlacementSweep {
    #[serde(default = "default_sweep_count")]
    pub count: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Training {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub output_activation: OutputActivation,
}

impl Default for Training {
    fn default() -> Self {
        let t = TrainConfig::default();
        Training {
            learning_rate: t.learning_rate,
            beta1: t.beta1,
            beta2: t.beta2,
            epsilon: t.epsilon,
            batch_size: t.batch_size,
            max_epochs: t.max_epochs,
            patience: t.patience,
            output_activation: t.output_activation,
        }
    }
}

impl Training {
    pub fn with_seed(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            learning_rate: self.learning_rate,
            beta1: self.beta1,
            beta2: self.beta2,
            epsilon: self.epsilon,
            batch_size: self.batch_size,
            max_epochs: self.max_epochs,
            patience: self.patience,
            seed,
            output_activation: self.output_activation,
        }
    }
}

fn default_sweep_count() -> usize {
    10
}
fn default_days() -> u32 {
    28
}
fn default_source_pu() -> f64 {
    1.0
}
fn default_load_ohm() -> f64 {
    DEFAULT_LOAD_OHM
}
fn default_power_factor() -> f64 {
    1.0
}
fn default_start() -> String {
    DEFAULT_START.to_string()
}
fn default_coverage() -> Vec<Coverage> {
    vec![
        Coverage::Count(2),
        Coverage::Count(5),
        Coverage::Count(10),
        Coverage::Full,
    ]
}
fn default_strategy() -> PlacementStrategy {
    PlacementStrategy::KeyLocations
}
fn yes() -> bool {
    true
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Circuit JSON, relative to the configuration file.
    pub circuit: PathBuf,
    /// Defaults to the circuit file stem.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub circuit_id: Option<String>,
    pub seeds: Seeds,
    #[serde(default = "default_days")]
    pub days: u32,
    #[serde(default = "default_source_pu")]
    pub source_pu: f64,
    #[serde(default = "default_load_ohm")]
    pub load_ohm: f64,
    #[serde(default = "default_power_factor")]
    pub power_factor: f64,
    #[serde(default = "default_start")]
    pub start: String,
    #[serde(default = "default_coverage")]
    pub coverage: Vec<Coverage>,
    #[serde(default = "default_strategy")]
    pub strategy: PlacementStrategy,
    #[serde(default = "yes")]
    pub both_power_modes: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub placement_sweep: Option<PlacementSweep>,
    #[serde(default)]
    pub training: Training,
    /// Relative to the configuration file; the command line overrides it.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
}

/// A validated configuration plus the directory its paths are relative to.
#[derive(Clone, Debug, PartialEq)]
pub struct LoadedConfig {
    pub config: RunConfig,
    pub base_dir: PathBuf,
}

impl LoadedConfig {
    /// Reads and validates; nothing else runs if this fails.
    pub fn load(path: &Path) -> Result<LoadedConfig> {
        let text = fsio::read_string(path)?;
        let config = parse(&text).map_err(|source| Error::Json {
            path: path.to_path_buf(),
            source,
        })?;
        config
            .validate()
            .map_err(|m| Error::Config(format!("{}: {m}", path.display())))?;
        let base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(LoadedConfig { config, base_dir })
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn circuit_path(&self) -> PathBuf {
        self.resolve(&self.config.circuit)
    }

    pub fn circuit_id(&self) -> String {
        self.config.circuit_id.clone().unwrap_or_else(|| {
            self.config
                .circuit
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| "circuit".to_string())
        })
    }

    /// Explicit output directory, else the configured one.
    pub fn output_dir(&self, explicit: Option<&Path>) -> Result<PathBuf> {
        match (explicit, &self.config.output_dir) {
            (Some(p), _) => Ok(p.to_path_buf()),
            (None, Some(p)) => Ok(self.resolve(p)),
            (None, None) => Err(Error::Config(
                "no output directory: pass --output or set output_dir".to_string(),
            )),
        }
    }
}

pub fn parse(text: &str) -> std::result::Result<RunConfig, serde_json::Error> {
    serde_json::from_str(text)
}

impl RunConfig {
    pub fn validate(&self) -> std::result::Result<(), String> {
        if self.seeds.placement.is_empty() {
            return Err("seeds.placement must list at least one seed".to_string());
        }
        if self.days < lvvc_core::demand::MIN_DAYS {
            return Err(format!(
                "days must be at least {}, got {}",
                lvvc_core::demand::MIN_DAYS,
                self.days
            ));
        }
        if !(self.source_pu > 0.0 && self.source_pu.is_finite()) {
            return Err("source_pu must be positive".to_string());
        }
        if !(self.load_ohm > 0.0 && self.load_ohm.is_finite()) {
            return Err("load_ohm must be positive".to_string());
        }
        if !(self.power_factor > 0.0 && self.power_factor <= 1.0) {
            return Err("power_factor must be in (0, 1]".to_string());
        }
        if self.coverage.is_empty() {
            return Err("coverage must list at least one meter count".to_string());
        }
        if self.coverage.contains(&Coverage::Count(0)) {
            return Err("meter counts must be at least 1".to_string());
        }
        if let Some(s) = self.placement_sweep {
            if s.count == 0 {
                return Err("placement_sweep.count must be at least 1".to_string());
            }
            if self.seeds.placement.len() < 2 {
                return Err("placement_sweep needs at least two placement seeds".to_string());
            }
        }
        let t = &self.training;
        if !(t.learning_rate > 0.0) || t.batch_size == 0 || t.max_epochs == 0 {
            return Err(
                "training needs a positive learning_rate, batch_size and max_epochs".to_string(),
            );
        }
        parse_timestamp(&self.start).map_err(|m| format!("start: {m}"))?;
        Ok(())
    }

    pub fn start(&self) -> DateTime<Utc> {
        parse_timestamp(&self.start).expect("validated")
    }

    pub fn simulation(&self) -> SimulationConfig {
        SimulationConfig {
            demand_seed: self.seeds.demand,
            phase_seed: self.seeds.phase,
            days: self.days,
            source_pu: self.source_pu,
            load_ohm: self.load_ohm,
            powerflow: PowerFlowConfig {
                power_factor: self.power_factor,
                ..PowerFlowConfig::default()
            },
            ..SimulationConfig::default()
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        self.training.with_seed(self.seeds.model)
    }
}
