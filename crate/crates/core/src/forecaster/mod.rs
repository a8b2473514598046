//! Trainable forecasters behind a common trait, selected by name through a
//! [`ModelRegistry`].
//!
//! Registered by default:
//!
//! | name          | model                                             |
//! |---------------|---------------------------------------------------|
//! | `lstm`        | single-layer LSTM + dense head, Adam on MSE       |
//! | `persistence` | last observation of the input window              |
//! | `linear_ar`   | least-squares AR(W) with intercept                |

mod adam;
mod baseline;
mod gradcheck;
mod lstm;
mod scaler;
mod train;

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

pub use adam::Adam;
pub use baseline::{baseline_linear_ar, baseline_persistence, LinearAr};
pub use gradcheck::{gradient_check, gradient_check_with_fault};
pub use lstm::{lstm_forward, GradientFault, LstmModel};
pub use scaler::{Scaler, ScalingKind};
pub use train::{predict, train, EpochLoss, Monitor, TrainConfig, TrainOutcome};

use crate::error::{Error, Result};
use crate::metrics::EpochInfo;
use crate::windowing::SequenceSet;

/// A model family that can be fitted on a training partition.
pub trait Forecaster: Send + Sync {
    fn name(&self) -> &str;

    /// Whether fitting depends on the seed.
    fn is_stochastic(&self) -> bool;

    fn fit(
        &self,
        train: &SequenceSet,
        val: Option<&SequenceSet>,
        seed: Option<u64>,
    ) -> Result<Box<dyn Fitted>>;
}

/// A fitted model ready to forecast.
pub trait Fitted: Send {
    fn predict(&self, set: &SequenceSet) -> Result<Vec<f64>>;

    /// Best and final epoch, for models trained iteratively.
    fn epochs(&self) -> Option<EpochInfo> {
        None
    }

    fn loss_history_csv(&self) -> Option<String> {
        None
    }
}

impl Fitted for TrainOutcome {
    fn predict(&self, set: &SequenceSet) -> Result<Vec<f64>> {
        TrainOutcome::predict(self, set)
    }

    fn epochs(&self) -> Option<EpochInfo> {
        Some(EpochInfo {
            optimal_epoch: self.optimal_epoch as f64,
            last_epoch: self.last_epoch as f64,
        })
    }

    fn loss_history_csv(&self) -> Option<String> {
        Some(TrainOutcome::loss_history_csv(self))
    }
}

pub struct LstmForecaster {
    pub config: TrainConfig,
}

impl Forecaster for LstmForecaster {
    fn name(&self) -> &str {
        "lstm"
    }

    fn is_stochastic(&self) -> bool {
        true
    }

    fn fit(
        &self,
        train_set: &SequenceSet,
        val: Option<&SequenceSet>,
        seed: Option<u64>,
    ) -> Result<Box<dyn Fitted>> {
        let cfg = TrainConfig {
            seed: seed.or(self.config.seed),
            ..self.config.clone()
        };
        Ok(Box::new(train(train_set, val, &cfg)?))
    }
}

pub struct PersistenceForecaster;

struct Persistence;

impl Fitted for Persistence {
    fn predict(&self, set: &SequenceSet) -> Result<Vec<f64>> {
        Ok(baseline_persistence(set))
    }
}

impl Forecaster for PersistenceForecaster {
    fn name(&self) -> &str {
        "persistence"
    }

    fn is_stochastic(&self) -> bool {
        false
    }

    fn fit(&self, _: &SequenceSet, _: Option<&SequenceSet>, _: Option<u64>) -> Result<Box<dyn Fitted>> {
        Ok(Box::new(Persistence))
    }
}

pub struct LinearArForecaster;

impl Fitted for LinearAr {
    fn predict(&self, set: &SequenceSet) -> Result<Vec<f64>> {
        Ok(LinearAr::predict(self, set))
    }
}

impl Forecaster for LinearArForecaster {
    fn name(&self) -> &str {
        "linear_ar"
    }

    fn is_stochastic(&self) -> bool {
        false
    }

    fn fit(&self, train: &SequenceSet, _: Option<&SequenceSet>, _: Option<u64>) -> Result<Box<dyn Fitted>> {
        Ok(Box::new(LinearAr::fit(train)?))
    }
}

type Factory = Arc<dyn Fn(&TrainConfig) -> Box<dyn Forecaster> + Send + Sync>;

/// Name → constructor table for forecasters.
#[derive(Clone)]
pub struct ModelRegistry {
    factories: BTreeMap<String, Factory>,
}

impl ModelRegistry {
    pub fn empty() -> Self {
        Self {
            factories: BTreeMap::new(),
        }
    }

    pub fn register<F>(&mut self, name: impl Into<String>, factory: F)
    where
        F: Fn(&TrainConfig) -> Box<dyn Forecaster> + Send + Sync + 'static,
    {
        self.factories.insert(name.into(), Arc::new(factory));
    }

    pub fn create(&self, name: &str, config: &TrainConfig) -> Result<Box<dyn Forecaster>> {
        let factory = self.factories.get(name).ok_or_else(|| {
            Error::Config(format!(
                "unknown model '{name}' (registered: {})",
                self.names().join(", ")
            ))
        })?;
        Ok(factory(config))
    }

    pub fn contains(&self, name: &str) -> bool {
        self.factories.contains_key(name)
    }

    pub fn names(&self) -> Vec<&str> {
        self.factories.keys().map(String::as_str).collect()
    }
}

impl Default for ModelRegistry {
    fn default() -> Self {
        let mut r = Self::empty();
        r.register("lstm", |cfg| {
            Box::new(LstmForecaster {
                config: cfg.clone(),
            })
        });
        r.register("persistence", |_| Box::new(PersistenceForecaster));
        r.register("linear_ar", |_| Box::new(LinearArForecaster));
        r
    }
}

const CHECKPOINT_FORMAT: &str = "tsleak-lstm-v1";

/// JSON checkpoint of a trained LSTM.
///
/// `gate_weights` holds `4H` rows of `1 + H` values: column 0 multiplies the
/// scalar input, columns `1..=H` the previous hidden state. Rows are grouped
/// by gate in `gate_order`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub hidden_size: usize,
    pub gate_order: Vec<String>,
    pub gate_weights: Vec<Vec<f64>>,
    pub gate_bias: Vec<f64>,
    pub head_weights: Vec<f64>,
    pub head_bias: f64,
    pub scaler: Scaler,
    pub train_config: Option<TrainConfig>,
}

impl Checkpoint {
    pub fn new(model: &LstmModel, scaler: &Scaler, train_config: Option<&TrainConfig>) -> Self {
        let cols = 1 + model.hidden_size();
        Self {
            format: CHECKPOINT_FORMAT.into(),
            hidden_size: model.hidden_size(),
            gate_order: ["input", "forget", "cell", "output"].map(String::from).to_vec(),
            gate_weights: model.gate_weights().chunks(cols).map(<[f64]>::to_vec).collect(),
            gate_bias: model.gate_bias().to_vec(),
            head_weights: model.head_weights().to_vec(),
            head_bias: model.head_bias(),
            scaler: scaler.clone(),
            train_config: train_config.cloned(),
        }
    }

    pub fn model(&self) -> Result<LstmModel> {
        if self.format != CHECKPOINT_FORMAT {
            return Err(Error::Data(format!("unsupported checkpoint format '{}'", self.format)));
        }
        let params: Vec<f64> = self
            .gate_weights
            .iter()
            .flatten()
            .chain(&self.gate_bias)
            .chain(&self.head_weights)
            .chain(std::iter::once(&self.head_bias))
            .copied()
            .collect();
        LstmModel::from_params(self.hidden_size, params)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, serde_json::to_string_pretty(self)?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}
