//! Experiment grids: every (setup, window, lag, plan, mode) cell is split,
//! audited, fitted and scored `repetitions` times, then aggregated into an
//! [`ExperimentReport`].
//!
//! Each run draws its seed from the base seed and a hash of the cell and run
//! index, so cells are independent of each other and of scheduling. Runs
//! execute on a rayon pool; the report is assembled afterwards in grid order.

mod config;
mod report;

use std::fmt;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use config::{DatasetConfig, ExperimentConfig, ResolvedSetup, SetupConfig};
pub use report::{
    cells_csv, gain_plot_csv, gains_csv, gains_from_cells, load_report, rank_groups, read_cells_csv,
    report_json, runs_csv, write_report, CellFailure, CellReport, CellRow, ExperimentReport, GainRow,
    Provenance, RunRecord, CELLS_FILE, GAINS_FILE, GAIN_PLOT_FILE, REPORT_FILE, RUNS_FILE,
};

use crate::audit::{audit, minimal_clearing_gap, AuditReport};
use crate::error::{Error, Result};
use crate::forecaster::{Forecaster, ModelRegistry};
use crate::metrics::{aggregate, rmse, EpochInfo, GainRecord};
use crate::splitting::{split_values, Mode, Order, SplitPlan, SplitSpec};
use crate::windowing::WindowConfig;

/// Coordinates of one grid cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellKey {
    pub setup: String,
    pub window: usize,
    pub lag: usize,
    pub plan: SplitPlan,
    pub mode: Mode,
}

impl fmt::Display for CellKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} W={} L={} {} {}",
            self.setup,
            self.window,
            self.lag,
            self.plan.label(),
            self.mode
        )
    }
}

impl CellKey {
    fn file_stem(&self) -> String {
        format!(
            "{}_w{}_l{}_{}_{}",
            self.setup.replace(|c: char| !c.is_ascii_alphanumeric() && c != '-', "_"),
            self.window,
            self.lag,
            self.plan.label(),
            self.mode
        )
    }
}

/// Overrides applied on top of an [`ExperimentConfig`].
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub base_seed: Option<u64>,
    pub workers: Option<usize>,
    pub keep_going: Option<bool>,
    /// Directory for per-model loss-history CSVs.
    pub loss_dir: Option<PathBuf>,
}

struct Cell {
    key: CellKey,
    order: Order,
    repetitions: usize,
    setup: usize,
}

fn cells(cfg: &ExperimentConfig) -> (Vec<ResolvedSetup>, Vec<Cell>) {
    let setups = cfg.resolved_setups();
    let mut out = Vec::new();
    for (si, setup) in setups.iter().enumerate() {
        for (window, lag) in cfg.grid() {
            for plan in &cfg.plans {
                for &mode in &cfg.modes {
                    out.push(Cell {
                        key: CellKey {
                            setup: setup.name.clone(),
                            window,
                            lag,
                            plan: *plan,
                            mode,
                        },
                        order: setup.order,
                        repetitions: setup.repetitions,
                        setup: si,
                    });
                }
            }
        }
    }
    (setups, out)
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325, |h, &b| {
        (h ^ b as u64).wrapping_mul(0x0100_0000_01b3)
    })
}

/// Seed of run `run` in `cell`, stable across platforms and grid layouts.
pub fn run_seed(base_seed: u64, cell: &CellKey, run: usize) -> u64 {
    let tag = format!(
        "{}|{}|{}|{}|{}|{}",
        cell.setup, cell.window, cell.lag, cell.plan, cell.mode, run
    );
    splitmix64(base_seed ^ fnv1a(tag.as_bytes()))
}

fn fold_seed(run_seed: u64, fold: usize) -> u64 {
    splitmix64(run_seed ^ (fold as u64 + 1).wrapping_mul(0x9e37_79b9_7f4a_7c15))
}

fn spec(cell: &Cell, seed: u64) -> Result<SplitSpec> {
    let spec = SplitSpec {
        plan: cell.key.plan,
        mode: cell.key.mode,
        order: cell.order,
        window: WindowConfig::new(cell.key.window, cell.key.lag)?,
        seed: Some(seed),
    };
    spec.validate()?;
    Ok(spec)
}

fn contamination_gate(key: &CellKey, report: &AuditReport) -> Result<()> {
    if key.mode == Mode::Clean && report.is_contaminated {
        return Err(Error::ContaminatedClean {
            cell: key.to_string(),
            overlap: report.overlap_count,
        });
    }
    Ok(())
}

struct RunOutput {
    record: RunRecord,
    audits: Vec<AuditReport>,
}

fn run_once(
    values: &[f64],
    cell: &Cell,
    forecaster: &dyn Forecaster,
    run: usize,
    seed: u64,
    loss_dir: Option<&Path>,
) -> Result<RunOutput> {
    let folds = split_values(values, &spec(cell, seed)?)?;
    let mut audits = Vec::with_capacity(folds.len());
    let mut fold_rmses = Vec::with_capacity(folds.len());
    let mut epochs = Vec::new();
    for fold in &folds {
        let report = audit(fold);
        contamination_gate(&cell.key, &report)?;
        audits.push(report);
        let fitted = forecaster.fit(&fold.train, fold.val.as_ref(), Some(fold_seed(seed, fold.fold_index)))?;
        let predictions = fitted.predict(&fold.test)?;
        fold_rmses.push(rmse(&predictions, &fold.test.targets())?);
        epochs.extend(fitted.epochs());
        if let (Some(dir), Some(history)) = (loss_dir, fitted.loss_history_csv()) {
            let path = dir.join(format!("{}_r{run}_f{}.csv", cell.key.file_stem(), fold.fold_index));
            std::fs::write(&path, history).map_err(|e| Error::io(path, e))?;
        }
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let epoch_mean = |f: fn(&EpochInfo) -> f64| {
        (!epochs.is_empty()).then(|| mean(&epochs.iter().map(f).collect::<Vec<_>>()))
    };
    Ok(RunOutput {
        record: RunRecord {
            run,
            seed,
            rmse: mean(&fold_rmses),
            optimal_epoch: epoch_mean(|e| e.optimal_epoch),
            last_epoch: epoch_mean(|e| e.last_epoch),
            max_overlap: audits.iter().map(|a| a.overlap_count).max().unwrap_or(0),
            fold_rmses,
        },
        audits,
    })
}

fn pool(workers: Option<usize>) -> Result<rayon::ThreadPool> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = workers {
        builder = builder.num_threads(n);
    }
    builder.build().map_err(|e| Error::Config(format!("thread pool: {e}")))
}

/// Audit of one cell's first-run split, without training.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellAudit {
    pub key: CellKey,
    pub folds: Vec<AuditReport>,
    pub max_overlap: usize,
    /// Smallest buffer that clears every contaminated fold.
    pub clearing_gap: Option<usize>,
    pub error: Option<String>,
}

/// Splits and audits every cell. A contaminated clean cell is an error;
/// other split failures are recorded on the cell.
pub fn audit_experiment(cfg: &ExperimentConfig, base_seed: Option<u64>) -> Result<Vec<CellAudit>> {
    let series = cfg.dataset.load()?;
    let base = base_seed.or(cfg.base_seed).unwrap_or(0);
    let (_, grid) = cells(cfg);
    let mut out = Vec::with_capacity(grid.len());
    for cell in &grid {
        let folds = spec(cell, run_seed(base, &cell.key, 0)).and_then(|s| split_values(series.values(), &s));
        let folds = match folds {
            Ok(f) => f,
            Err(e) => {
                out.push(CellAudit {
                    key: cell.key.clone(),
                    folds: Vec::new(),
                    max_overlap: 0,
                    clearing_gap: None,
                    error: Some(e.chain()),
                });
                continue;
            }
        };
        let reports: Vec<AuditReport> = folds.iter().map(audit).collect();
        for r in &reports {
            contamination_gate(&cell.key, r)?;
        }
        let clearing_gap = folds
            .iter()
            .zip(&reports)
            .filter(|(_, r)| r.is_contaminated)
            .map(|(f, _)| minimal_clearing_gap(f).ok())
            .try_fold(0, |acc, g| g.map(|g| acc.max(g)));
        out.push(CellAudit {
            max_overlap: reports.iter().map(|r| r.overlap_count).max().unwrap_or(0),
            key: cell.key.clone(),
            folds: reports,
            clearing_gap,
            error: None,
        });
    }
    Ok(out)
}

const KFOLD_AGGREGATION: &str = "run RMSE is the mean of the per-fold test RMSEs";
const ES_MONITOR: &str =
    "validation loss when the plan has a validation partition, otherwise epoch training loss; best weights restored";
const CI_METHOD: &str = "mean ± t(0.975, n-1) · s/√n with sample std s";
const SCALING: &str = "scaler fitted on training-partition values only";

/// Runs the whole grid with the default model registry.
pub fn run_experiment(cfg: &ExperimentConfig, options: &RunOptions) -> Result<ExperimentReport> {
    run_experiment_with(cfg, options, &ModelRegistry::default())
}

pub fn run_experiment_with(
    cfg: &ExperimentConfig,
    options: &RunOptions,
    registry: &ModelRegistry,
) -> Result<ExperimentReport> {
    cfg.validate()?;
    let started_at = chrono::Utc::now().to_rfc3339();
    let series = cfg.dataset.load()?;
    let values = series.values();
    let base_seed = options.base_seed.or(cfg.base_seed);
    let keep_going = options.keep_going.unwrap_or(cfg.keep_going);
    let workers = options.workers.or(cfg.workers);
    if workers == Some(0) {
        return Err(Error::Config("workers must be at least 1".into()));
    }
    if let Some(dir) = &options.loss_dir {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }

    let (setups, grid) = cells(cfg);
    let forecasters = setups
        .iter()
        .map(|s| registry.create(&cfg.model, &s.train))
        .collect::<Result<Vec<_>>>()?;

    // fail fast on split construction before any training
    let mut failures = Vec::new();
    let mut live = vec![true; grid.len()];
    for (i, cell) in grid.iter().enumerate() {
        let seed = base_seed.map_or(0, |b| run_seed(b, &cell.key, 0));
        let checked = spec(cell, seed).and_then(|s| split_values(values, &s));
        match checked {
            Ok(folds) => {
                for fold in &folds {
                    contamination_gate(&cell.key, &audit(fold))?;
                }
            }
            Err(e) if keep_going => {
                failures.push(CellFailure {
                    cell: cell.key.to_string(),
                    error: e.chain(),
                });
                live[i] = false;
            }
            Err(e) => {
                return Err(Error::Cell {
                    cell: cell.key.to_string(),
                    source: Box::new(e),
                })
            }
        }
    }

    let jobs: Vec<(usize, usize, u64)> = grid
        .iter()
        .enumerate()
        .filter(|(i, _)| live[*i])
        .flat_map(|(i, cell)| {
            (0..cell.repetitions).map(move |run| {
                let seed = match base_seed {
                    Some(b) => run_seed(b, &cell.key, run),
                    None => rand::random(),
                };
                (i, run, seed)
            })
        })
        .collect();

    let loss_dir = if cfg.save_loss_history { options.loss_dir.as_deref() } else { None };
    let outputs: Vec<Result<RunOutput>> = pool(workers)?.install(|| {
        jobs.par_iter()
            .map(|&(i, run, seed)| {
                let cell = &grid[i];
                run_once(values, cell, forecasters[cell.setup].as_ref(), run, seed, loss_dir)
            })
            .collect()
    });

    let mut per_cell: Vec<Vec<RunOutput>> = (0..grid.len()).map(|_| Vec::new()).collect();
    let mut failed = vec![false; grid.len()];
    for (&(i, _, _), output) in jobs.iter().zip(outputs) {
        match output {
            Ok(o) => per_cell[i].push(o),
            Err(e) if e.is_contamination() => return Err(e),
            Err(e) if keep_going => {
                if !failed[i] {
                    failures.push(CellFailure {
                        cell: grid[i].key.to_string(),
                        error: e.chain(),
                    });
                }
                failed[i] = true;
            }
            Err(e) => {
                return Err(Error::Cell {
                    cell: grid[i].key.to_string(),
                    source: Box::new(e),
                })
            }
        }
    }

    let mut cell_reports = Vec::new();
    for (i, cell) in grid.iter().enumerate() {
        if !live[i] || failed[i] {
            continue;
        }
        let outputs = std::mem::take(&mut per_cell[i]);
        let rmses: Vec<f64> = outputs.iter().map(|o| o.record.rmse).collect();
        let epochs: Option<Vec<EpochInfo>> = outputs
            .iter()
            .map(|o| {
                Some(EpochInfo {
                    optimal_epoch: o.record.optimal_epoch?,
                    last_epoch: o.record.last_epoch?,
                })
            })
            .collect();
        let stats = aggregate(&rmses, epochs.as_deref())?;
        let max_overlap = outputs.iter().map(|o| o.record.max_overlap).max().unwrap_or(0);
        let mut outputs = outputs.into_iter();
        let first = outputs.next().expect("at least one repetition");
        let mut runs = vec![first.record];
        runs.extend(outputs.map(|o| o.record));
        cell_reports.push(CellReport {
            key: cell.key.clone(),
            stats,
            max_overlap,
            audits: first.audits,
            runs,
        });
    }

    let gains = pair_gains(&cell_reports)?;
    let notes = gain_notes(&gains);
    Ok(ExperimentReport {
        name: cfg.name.clone(),
        provenance: Provenance {
            tool: env!("CARGO_PKG_NAME").into(),
            version: env!("CARGO_PKG_VERSION").into(),
            started_at,
            finished_at: chrono::Utc::now().to_rfc3339(),
            dataset: series.name().into(),
            dataset_points: series.len(),
            seeding: match base_seed {
                Some(b) => format!("base seed {b}; run seed = splitmix64(base xor fnv1a(cell, run))"),
                None => "fresh entropy per run".into(),
            },
            kfold_aggregation: KFOLD_AGGREGATION.into(),
            early_stopping_monitor: ES_MONITOR.into(),
            confidence_interval: CI_METHOD.into(),
            scaling: SCALING.into(),
            config: ExperimentConfig {
                base_seed,
                keep_going,
                workers,
                ..cfg.clone()
            },
        },
        cells: cell_reports,
        gains,
        failures,
        notes,
    })
}

/// One gain per clean/leaky pair with matching (setup, window, lag, plan),
/// in grid order, ranked within each (setup, window, lag) group.
fn pair_gains(cells: &[CellReport]) -> Result<Vec<GainRecord>> {
    let mut gains = Vec::new();
    for clean in cells.iter().filter(|c| c.key.mode == Mode::Clean) {
        let leaky = cells.iter().find(|c| {
            c.key.mode == Mode::Leaky
                && c.key.setup == clean.key.setup
                && c.key.window == clean.key.window
                && c.key.lag == clean.key.lag
                && c.key.plan == clean.key.plan
        });
        if let Some(leaky) = leaky {
            let k = &clean.key;
            gains.push(GainRecord::new(
                &k.setup,
                k.window,
                k.lag,
                k.plan,
                clean.stats.mean,
                leaky.stats.mean,
            )?);
        }
    }
    rank_groups(&mut gains);
    Ok(gains)
}

fn gain_notes(gains: &[GainRecord]) -> Vec<String> {
    let mut notes = Vec::new();
    for g in gains.iter().filter(|g| g.gain_percent < 0.0) {
        notes.push(format!(
            "{} W={} L={} {}: negative gain {:.2}%, ranked by magnitude",
            g.setup,
            g.window,
            g.lag,
            g.plan.label(),
            g.gain_percent
        ));
    }
    notes
}

#[cfg(test)]
mod tests {
    use super::*;

    fn key(mode: Mode) -> CellKey {
        CellKey {
            setup: "base".into(),
            window: 10,
            lag: 1,
            plan: SplitPlan::k_fold(10),
            mode,
        }
    }

    #[test]
    fn seeds_depend_on_cell_and_run() {
        let a = run_seed(1, &key(Mode::Clean), 0);
        assert_eq!(a, run_seed(1, &key(Mode::Clean), 0));
        assert_ne!(a, run_seed(1, &key(Mode::Clean), 1));
        assert_ne!(a, run_seed(1, &key(Mode::Leaky), 0));
        assert_ne!(a, run_seed(2, &key(Mode::Clean), 0));
    }

    #[test]
    fn fnv_reference_values() {
        assert_eq!(fnv1a(b""), 0xcbf2_9ce4_8422_2325);
        assert_eq!(fnv1a(b"a"), 0xaf63_dc4c_8601_ec8c);
    }

    #[test]
    fn cell_display() {
        assert_eq!(key(Mode::Leaky).to_string(), "base W=10 L=1 10-fold leaky");
        assert_eq!(key(Mode::Leaky).file_stem(), "base_w10_l1_10-fold_leaky");
    }
}
