//! TOML experiment configuration.
//!
//! ```toml
//! name = "phase-3"
//! repetitions = 10
//! base_seed = 42
//! windows = [3, 7, 10]
//! lags = [1, 2, 3]
//! variants = [[10, 1], [7, 1], [3, 1], [10, 2], [10, 3]]
//! plans = ["two_way", "three_way", "k_fold:10"]
//! modes = ["leaky", "clean"]
//! order = "sequential"
//! model = "lstm"
//!
//! [dataset]
//! path = "data/climate_synthetic.csv"
//! date_column = "date"
//! value_column = "meantemp"
//!
//! [train]
//! epochs = 100
//! early_stopping = true
//! patience = 10
//! ```
//!
//! `variants`, when present, replaces the full `windows × lags` product.
//! `[[setups]]` tables name alternative training setups; each carries its own
//! `order`, `repetitions` and `[setups.train]` table. Without them the run has
//! a single setup named `base` built from the top-level fields.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forecaster::TrainConfig;
use crate::series::{load_csv, TimeSeries};
use crate::splitting::{Mode, Order, SplitPlan};
use crate::synthetic::{climate_series, ClimateProfile};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetConfig {
    /// CSV file, relative paths resolve against the config file.
    #[serde(default)]
    pub path: Option<PathBuf>,
    #[serde(default = "default_date_column")]
    pub date_column: String,
    #[serde(default = "default_value_column")]
    pub value_column: String,
    /// Generate the calibrated synthetic climate series with this seed
    /// instead of reading a file.
    #[serde(default)]
    pub synthetic_seed: Option<u64>,
}

fn default_date_column() -> String {
    "date".into()
}

fn default_value_column() -> String {
    "meantemp".into()
}

impl DatasetConfig {
    pub fn load(&self) -> Result<TimeSeries> {
        match (&self.path, self.synthetic_seed) {
            (Some(path), None) => load_csv(path, &self.value_column, &self.date_column),
            (None, Some(seed)) => climate_series(&ClimateProfile::default(), seed),
            _ => Err(Error::Config(
                "dataset needs exactly one of `path` or `synthetic_seed`".into(),
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SetupConfig {
    pub name: String,
    #[serde(default)]
    pub order: Option<Order>,
    #[serde(default)]
    pub repetitions: Option<usize>,
    #[serde(default)]
    pub train: TrainConfig,
}

/// A setup with every optional field resolved.
#[derive(Debug, Clone, PartialEq)]
pub struct ResolvedSetup {
    pub name: String,
    pub order: Order,
    pub repetitions: usize,
    pub train: TrainConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    pub dataset: DatasetConfig,
    pub windows: Vec<usize>,
    pub lags: Vec<usize>,
    #[serde(default)]
    pub variants: Option<Vec<(usize, usize)>>,
    pub plans: Vec<SplitPlan>,
    pub modes: Vec<Mode>,
    #[serde(default)]
    pub order: Order,
    #[serde(default = "default_model")]
    pub model: String,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub setups: Vec<SetupConfig>,
    pub repetitions: usize,
    #[serde(default)]
    pub base_seed: Option<u64>,
    /// Worker threads; all cores when absent.
    #[serde(default)]
    pub workers: Option<usize>,
    #[serde(default)]
    pub keep_going: bool,
    /// Write one loss-history CSV per fitted model.
    #[serde(default)]
    pub save_loss_history: bool,
}

fn default_model() -> String {
    "lstm".into()
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads and validates a config file, resolving the dataset path
    /// against the file's directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_toml(&text)?;
        if let Some(data) = cfg.dataset.path.as_mut() {
            if data.is_relative() {
                if let Some(dir) = path.parent() {
                    *data = dir.join(&*data);
                }
            }
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::Config(msg.into()));
        if self.windows.is_empty() || self.lags.is_empty() {
            return bad("window and lag grids must be non-empty");
        }
        if self.plans.is_empty() || self.modes.is_empty() {
            return bad("plan and mode lists must be non-empty");
        }
        if self.repetitions == 0 {
            return bad("repetitions must be at least 1");
        }
        if self.workers == Some(0) {
            return bad("workers must be at least 1");
        }
        if let Some(v) = &self.variants {
            if v.is_empty() {
                return bad("variants, when given, must be non-empty");
            }
            if let Some((w, l)) = v
                .iter()
                .find(|(w, l)| !self.windows.contains(w) || !self.lags.contains(l))
            {
                return Err(Error::Config(format!(
                    "variant ({w}, {l}) lies outside the window/lag grid"
                )));
            }
        }
        for (i, plan) in self.plans.iter().enumerate() {
            plan.validate()?;
            if self.plans[..i].iter().any(|p| p.label() == plan.label()) {
                return Err(Error::Config(format!("plan '{}' listed twice", plan.label())));
            }
        }
        for setup in self.resolved_setups() {
            setup.train.validate().map_err(|e| Error::Config(format!("setup '{}': {e}", setup.name)))?;
            if setup.repetitions == 0 {
                return Err(Error::Config(format!("setup '{}': repetitions must be at least 1", setup.name)));
            }
            if setup.order == Order::Random && self.modes.contains(&Mode::Clean) {
                return Err(Error::Config(format!(
                    "setup '{}': random order is only defined for leaky mode",
                    setup.name
                )));
            }
        }
        let mut names: Vec<&str> = self.setups.iter().map(|s| s.name.as_str()).collect();
        names.sort_unstable();
        if names.windows(2).any(|w| w[0] == w[1]) {
            return bad("setup names must be unique");
        }
        Ok(())
    }

    /// `(window, lag)` pairs in grid order.
    pub fn grid(&self) -> Vec<(usize, usize)> {
        match &self.variants {
            Some(v) => v.clone(),
            None => self
                .windows
                .iter()
                .flat_map(|&w| self.lags.iter().map(move |&l| (w, l)))
                .collect(),
        }
    }

    pub fn resolved_setups(&self) -> Vec<ResolvedSetup> {
        if self.setups.is_empty() {
            return vec![ResolvedSetup {
                name: "base".into(),
                order: self.order,
                repetitions: self.repetitions,
                train: self.train.clone(),
            }];
        }
        self.setups
            .iter()
            .map(|s| ResolvedSetup {
                name: s.name.clone(),
                order: s.order.unwrap_or(self.order),
                repetitions: s.repetitions.unwrap_or(self.repetitions),
                train: s.train.clone(),
            })
            .collect()
    }
}
