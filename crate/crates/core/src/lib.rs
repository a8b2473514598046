//! Leakage-aware evaluation harness for univariate time-series forecasting.
//!
//! The crate builds sliding-window datasets, partitions them under 2-way,
//! 3-way and blocked k-fold validation in either *leaky* (window, then split)
//! or *clean* (split, then window) mode, audits the raw-index overlap between
//! training and test data, trains forecasters, and quantifies leakage-induced
//! evaluation bias as the relative RMSE gain of the leaky pipeline over the
//! clean one.

pub mod audit;
pub mod error;
pub mod forecaster;
pub mod metrics;
pub mod runner;
pub mod series;
pub mod splitting;
pub mod synthetic;
pub mod windowing;

pub use audit::{apply_buffer, audit, minimal_clearing_gap, AuditReport};
pub use error::{Error, Result};
pub use forecaster::{
    Forecaster, LstmModel, ModelRegistry, Scaler, ScalingKind, TrainConfig, TrainOutcome,
};
pub use metrics::{aggregate, leakage_rank, rmse, rmse_gain, GainRecord, RunStats};
pub use series::{describe, load_csv, seasonal_decompose, write_csv, DescriptiveStats, TimeSeries};
pub use splitting::{split, Mode, Order, SplitPlan, SplitResult, SplitSpec};
pub use runner::{run_experiment, CellKey, ExperimentConfig, ExperimentReport, RunOptions};
pub use synthetic::{climate_series, ClimateProfile};
pub use windowing::{footprint, make_sequences, SequencePair, SequenceSet, WindowConfig};
