//! Mini-batch Adam training of the LSTM with optional early stopping.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::adam::Adam;
use super::lstm::{GradientFault, LstmModel, Tape};
use super::scaler::{Scaler, ScalingKind};
use crate::error::{Error, Result};
use crate::windowing::SequenceSet;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub early_stopping: bool,
    pub patience: usize,
    pub seed: Option<u64>,
    pub scaling: ScalingKind,
    pub hidden_size: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 100,
            learning_rate: 0.001,
            batch_size: 32,
            early_stopping: true,
            patience: 10,
            seed: None,
            scaling: ScalingKind::ZScore,
            hidden_size: 64,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidArgument(msg));
        if self.epochs == 0 {
            return bad("epochs must be positive".into());
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning rate must be positive (got {})", self.learning_rate));
        }
        if self.batch_size == 0 {
            return bad("batch size must be positive".into());
        }
        if self.hidden_size == 0 {
            return bad("hidden size must be positive".into());
        }
        if self.early_stopping && (self.patience == 0 || self.patience >= self.epochs) {
            return bad(format!(
                "patience must be in 1..epochs when early stopping is on (patience {}, epochs {})",
                self.patience, self.epochs
            ));
        }
        Ok(())
    }
}

/// Which loss early stopping watches.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Monitor {
    Validation,
    Training,
}

/// Per-epoch MSE in scaled units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochLoss {
    pub epoch: usize,
    pub train: f64,
    pub val: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainOutcome {
    pub model: LstmModel,
    pub scaler: Scaler,
    pub loss_history: Vec<EpochLoss>,
    /// 1-based epoch with the best monitored loss (the last epoch without
    /// early stopping).
    pub optimal_epoch: usize,
    pub last_epoch: usize,
    pub monitor: Monitor,
}

impl TrainOutcome {
    /// Predictions for every pair of `set`, in original units.
    pub fn predict(&self, set: &SequenceSet) -> Result<Vec<f64>> {
        predict(&self.model, &self.scaler, set)
    }

    /// Loss history as CSV (`epoch,train_mse,val_mse`).
    pub fn loss_history_csv(&self) -> String {
        let mut out = String::from("epoch,train_mse,val_mse\n");
        for e in &self.loss_history {
            let val = e.val.map(|v| v.to_string()).unwrap_or_default();
            out.push_str(&format!("{},{},{}\n", e.epoch, e.train, val));
        }
        out
    }
}

pub(crate) struct Scaled {
    pub inputs: Vec<Vec<f64>>,
    pub targets: Vec<f64>,
}

pub(crate) fn scale_set(scaler: &Scaler, set: &SequenceSet) -> Scaled {
    Scaled {
        inputs: set
            .pairs
            .iter()
            .map(|p| p.input.iter().map(|&x| scaler.transform(x)).collect())
            .collect(),
        targets: set.pairs.iter().map(|p| scaler.transform(p.target)).collect(),
    }
}

const EVAL_BATCH: usize = 256;

fn batched_outputs(model: &LstmModel, inputs: &[Vec<f64>], tape: &mut Tape) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(inputs.len());
    for chunk in inputs.chunks(EVAL_BATCH) {
        let refs: Vec<&[f64]> = chunk.iter().map(|x| x.as_slice()).collect();
        out.extend(model.forward_batch(&refs, tape)?);
    }
    Ok(out)
}

fn mse(model: &LstmModel, data: &Scaled, tape: &mut Tape) -> Result<f64> {
    let out = batched_outputs(model, &data.inputs, tape)?;
    Ok(out
        .iter()
        .zip(&data.targets)
        .map(|(y, t)| (y - t).powi(2))
        .sum::<f64>()
        / data.targets.len() as f64)
}

/// Trains a fresh LSTM on `train`.
///
/// The scaler is fitted on `train` alone and applied to every partition.
/// With early stopping the monitored loss is the validation MSE when a
/// validation set is given and the epoch training MSE otherwise; training
/// halts after `patience` epochs without strict improvement and the weights
/// from the best epoch are restored.
pub fn train(train: &SequenceSet, val: Option<&SequenceSet>, cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(Error::EmptyPartition {
            partition: "train".into(),
            raw_len: train.source_len(),
        });
    }
    if let Some(v) = val {
        if v.is_empty() && cfg.early_stopping {
            return Err(Error::EmptyPartition {
                partition: "val (early-stopping monitor)".into(),
                raw_len: v.source_len(),
            });
        }
    }

    let mut rng = match cfg.seed {
        Some(s) => ChaCha8Rng::seed_from_u64(s),
        None => ChaCha8Rng::from_os_rng(),
    };
    let scaler = Scaler::fit(cfg.scaling, train);
    let data = scale_set(&scaler, train);
    let val_data = val.filter(|v| !v.is_empty()).map(|v| scale_set(&scaler, v));
    let monitor = if val_data.is_some() {
        Monitor::Validation
    } else {
        Monitor::Training
    };

    let mut model = LstmModel::init(cfg.hidden_size, &mut rng);
    let mut opt = Adam::new(model.params().len(), cfg.learning_rate);
    let mut grad = vec![0.0; model.params().len()];
    let mut tape = Tape::default();
    let mut order: Vec<usize> = (0..data.targets.len()).collect();

    let mut history = Vec::with_capacity(cfg.epochs);
    let mut best: Option<(f64, usize, Vec<f64>)> = None;
    let mut stale = 0usize;
    let mut last_epoch = 0;

    for epoch in 1..=cfg.epochs {
        last_epoch = epoch;
        order.shuffle(&mut rng);
        let mut sse = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let inputs: Vec<&[f64]> = chunk.iter().map(|&i| data.inputs[i].as_slice()).collect();
            let targets: Vec<f64> = chunk.iter().map(|&i| data.targets[i]).collect();
            let loss = model
                .loss_and_grad(&inputs, &targets, &mut tape, &mut grad, GradientFault::None)
                .map_err(|_| Error::Divergence { epoch })?;
            if !loss.is_finite() {
                return Err(Error::Divergence { epoch });
            }
            sse += loss * chunk.len() as f64;
            opt.step(model.params_mut(), &grad);
        }
        let train_loss = sse / order.len() as f64;
        if !train_loss.is_finite() || model.params().iter().any(|p| !p.is_finite()) {
            return Err(Error::Divergence { epoch });
        }
        let val_loss = match &val_data {
            Some(v) => Some(mse(&model, v, &mut tape).map_err(|_| Error::Divergence { epoch })?),
            None => None,
        };
        history.push(EpochLoss {
            epoch,
            train: train_loss,
            val: val_loss,
        });

        if cfg.early_stopping {
            let watched = val_loss.unwrap_or(train_loss);
            match &best {
                Some((b, _, _)) if watched >= *b => {
                    stale += 1;
                    if stale >= cfg.patience {
                        break;
                    }
                }
                _ => {
                    best = Some((watched, epoch, model.params().to_vec()));
                    stale = 0;
                }
            }
        }
    }

    let optimal_epoch = match best {
        Some((_, epoch, params)) => {
            model.params_mut().copy_from_slice(&params);
            epoch
        }
        None => last_epoch,
    };

    Ok(TrainOutcome {
        model,
        scaler,
        loss_history: history,
        optimal_epoch,
        last_epoch,
        monitor,
    })
}

/// Runs `model` over every pair in `set` and maps outputs back to original
/// units with `scaler`.
pub fn predict(model: &LstmModel, scaler: &Scaler, set: &SequenceSet) -> Result<Vec<f64>> {
    if set.is_empty() {
        return Ok(Vec::new());
    }
    let scaled = scale_set(scaler, set);
    let out = batched_outputs(model, &scaled.inputs, &mut Tape::default())?;
    Ok(out.into_iter().map(|y| scaler.inverse_transform(y)).collect())
}
