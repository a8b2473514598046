//! Experiment report types and their CSV / JSON files.
//!
//! A run directory holds:
//!
//! | file            | rows                                                    |
//! |-----------------|---------------------------------------------------------|
//! | `cells.csv`     | one per cell (setup × window × lag × plan × mode)       |
//! | `gains.csv`     | one per matched clean/leaky cell pair                   |
//! | `runs.csv`      | one per repetition: cell coordinates, run, rmse         |
//! | `gain_plot.csv` | one per gain: name, window, lag, plan, gain_percent     |
//! | `report.json`   | everything above plus audits, seeds and provenance      |

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use super::CellKey;
use crate::audit::AuditReport;
use crate::error::{Error, Result};
use crate::metrics::{leakage_rank, Direction, GainRecord, RunStats};
use crate::splitting::{Mode, SplitPlan};

pub const CELLS_FILE: &str = "cells.csv";
pub const GAINS_FILE: &str = "gains.csv";
pub const RUNS_FILE: &str = "runs.csv";
pub const GAIN_PLOT_FILE: &str = "gain_plot.csv";
pub const REPORT_FILE: &str = "report.json";

/// One repetition of one cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub run: usize,
    pub seed: u64,
    /// Test RMSE; the mean of the fold RMSEs for k-fold plans.
    pub rmse: f64,
    pub fold_rmses: Vec<f64>,
    pub optimal_epoch: Option<f64>,
    pub last_epoch: Option<f64>,
    pub max_overlap: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellReport {
    pub key: CellKey,
    pub stats: RunStats,
    /// Largest train/test overlap over every fold of every run.
    pub max_overlap: usize,
    /// Per-fold audits of the first run.
    pub audits: Vec<AuditReport>,
    pub runs: Vec<RunRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellFailure {
    pub cell: String,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub tool: String,
    pub version: String,
    pub started_at: String,
    pub finished_at: String,
    pub dataset: String,
    pub dataset_points: usize,
    pub seeding: String,
    pub kfold_aggregation: String,
    pub early_stopping_monitor: String,
    pub confidence_interval: String,
    pub scaling: String,
    pub config: ExperimentConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub name: String,
    pub provenance: Provenance,
    pub cells: Vec<CellReport>,
    pub gains: Vec<GainRecord>,
    pub failures: Vec<CellFailure>,
    pub notes: Vec<String>,
}

impl ExperimentReport {
    pub fn total_runs(&self) -> usize {
        self.cells.iter().map(|c| c.runs.len()).sum()
    }

    pub fn cell(&self, setup: &str, window: usize, lag: usize, plan: &str, mode: Mode) -> Option<&CellReport> {
        self.cells.iter().find(|c| {
            c.key.setup == setup
                && c.key.window == window
                && c.key.lag == lag
                && c.key.plan.label() == plan
                && c.key.mode == mode
        })
    }

    pub fn gain(&self, setup: &str, window: usize, lag: usize, plan: &str) -> Option<&GainRecord> {
        self.gains
            .iter()
            .find(|g| g.setup == setup && g.window == window && g.lag == lag && g.plan.label() == plan)
    }
}

/// `cells.csv` row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellRow {
    pub name: String,
    pub window: usize,
    pub lag: usize,
    pub plan: String,
    pub mode: Mode,
    pub n_runs: usize,
    pub min: f64,
    pub max: f64,
    pub mean: f64,
    pub std: Option<f64>,
    pub stderr: Option<f64>,
    pub ci_low: Option<f64>,
    pub ci_high: Option<f64>,
    pub mean_optimal_epoch: Option<f64>,
    pub mean_last_epoch: Option<f64>,
    pub max_overlap: usize,
}

impl From<&CellReport> for CellRow {
    fn from(c: &CellReport) -> Self {
        let s = &c.stats;
        Self {
            name: c.key.setup.clone(),
            window: c.key.window,
            lag: c.key.lag,
            plan: c.key.plan.label(),
            mode: c.key.mode,
            n_runs: s.n_runs,
            min: s.min,
            max: s.max,
            mean: s.mean,
            std: s.std,
            stderr: s.stderr,
            ci_low: s.ci95.map(|c| c.0),
            ci_high: s.ci95.map(|c| c.1),
            mean_optimal_epoch: s.mean_optimal_epoch,
            mean_last_epoch: s.mean_last_epoch,
            max_overlap: c.max_overlap,
        }
    }
}

/// `gains.csv` row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GainRow {
    pub name: String,
    pub window: usize,
    pub lag: usize,
    pub plan: String,
    pub clean: f64,
    pub leaky: f64,
    pub gain_percent: f64,
    pub direction: Direction,
    pub rank: usize,
}

impl From<&GainRecord> for GainRow {
    fn from(g: &GainRecord) -> Self {
        Self {
            name: g.setup.clone(),
            window: g.window,
            lag: g.lag,
            plan: g.plan.label(),
            clean: g.rmse_clean,
            leaky: g.rmse_leaky,
            gain_percent: g.gain_percent,
            direction: g.direction,
            rank: g.leakage_rank,
        }
    }
}

#[derive(Serialize)]
struct RunRow<'a> {
    name: &'a str,
    window: usize,
    lag: usize,
    plan: String,
    mode: Mode,
    run: usize,
    rmse: f64,
}

#[derive(Serialize)]
struct GainPlotRow<'a> {
    name: &'a str,
    window: usize,
    lag: usize,
    plan: String,
    gain_percent: f64,
}

fn to_csv<T: Serialize>(rows: impl IntoIterator<Item = T>, header: &[&str]) -> Result<String> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    w.write_record(header)?;
    for row in rows {
        w.serialize(row)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Data(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Error::Data(e.to_string()))
}

const CELL_COLUMNS: [&str; 16] = [
    "name", "window", "lag", "plan", "mode", "n_runs", "min", "max", "mean", "std", "stderr",
    "ci_low", "ci_high", "mean_optimal_epoch", "mean_last_epoch", "max_overlap",
];
const GAIN_COLUMNS: [&str; 9] = [
    "name", "window", "lag", "plan", "clean", "leaky", "gain_percent", "direction", "rank",
];
const RUN_COLUMNS: [&str; 7] = ["name", "window", "lag", "plan", "mode", "run", "rmse"];
const GAIN_PLOT_COLUMNS: [&str; 5] = ["name", "window", "lag", "plan", "gain_percent"];

pub fn cells_csv(report: &ExperimentReport) -> Result<String> {
    to_csv(report.cells.iter().map(CellRow::from), &CELL_COLUMNS)
}

pub fn gains_csv(gains: &[GainRecord]) -> Result<String> {
    to_csv(gains.iter().map(GainRow::from), &GAIN_COLUMNS)
}

/// Long format, one row per repetition, in cell then run order.
pub fn runs_csv(report: &ExperimentReport) -> Result<String> {
    let rows = report.cells.iter().flat_map(|c| {
        c.runs.iter().map(move |r| RunRow {
            name: &c.key.setup,
            window: c.key.window,
            lag: c.key.lag,
            plan: c.key.plan.label(),
            mode: c.key.mode,
            run: r.run,
            rmse: r.rmse,
        })
    });
    to_csv(rows, &RUN_COLUMNS)
}

pub fn gain_plot_csv(report: &ExperimentReport) -> Result<String> {
    let rows = report.gains.iter().map(|g| GainPlotRow {
        name: &g.setup,
        window: g.window,
        lag: g.lag,
        plan: g.plan.label(),
        gain_percent: g.gain_percent,
    });
    to_csv(rows, &GAIN_PLOT_COLUMNS)
}

pub fn report_json(report: &ExperimentReport) -> Result<String> {
    Ok(serde_json::to_string_pretty(report)?)
}

fn write(dir: &Path, file: &str, contents: &str) -> Result<()> {
    let path = dir.join(file);
    fs::write(&path, contents).map_err(|e| Error::io(path, e))
}

/// Writes every report file into `dir`, creating it if needed.
pub fn write_report(report: &ExperimentReport, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write(dir, CELLS_FILE, &cells_csv(report)?)?;
    write(dir, GAINS_FILE, &gains_csv(&report.gains)?)?;
    write(dir, RUNS_FILE, &runs_csv(report)?)?;
    write(dir, GAIN_PLOT_FILE, &gain_plot_csv(report)?)?;
    write(dir, REPORT_FILE, &report_json(report)?)
}

pub fn load_report(dir: impl AsRef<Path>) -> Result<ExperimentReport> {
    let path = dir.as_ref().join(REPORT_FILE);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    Ok(serde_json::from_str(&text)?)
}

pub fn read_cells_csv(path: impl AsRef<Path>) -> Result<Vec<CellRow>> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::Reader::from_reader(file);
    let rows = reader.deserialize().collect::<std::result::Result<Vec<CellRow>, _>>()?;
    Ok(rows)
}

fn plan_from_label(label: &str) -> Result<SplitPlan> {
    match label {
        "2-way" => Ok(SplitPlan::two_way()),
        "3-way" => Ok(SplitPlan::three_way()),
        _ => label
            .strip_suffix("-fold")
            .and_then(|k| k.parse().ok())
            .map(SplitPlan::k_fold)
            .ok_or_else(|| Error::Data(format!("unknown plan label '{label}'"))),
    }
}

/// Pairs clean and leaky cells on (name, window, lag, plan) and ranks each
/// (name, window, lag) group. Output follows the order of the first
/// matching clean row.
pub fn gains_from_cells(clean: &[CellRow], leaky: &[CellRow]) -> Result<Vec<GainRecord>> {
    let mut gains = Vec::new();
    for c in clean.iter().filter(|r| r.mode == Mode::Clean) {
        let Some(l) = leaky.iter().find(|l| {
            l.mode == Mode::Leaky && l.name == c.name && l.window == c.window && l.lag == c.lag && l.plan == c.plan
        }) else {
            continue;
        };
        gains.push(GainRecord::new(&c.name, c.window, c.lag, plan_from_label(&c.plan)?, c.mean, l.mean)?);
    }
    rank_groups(&mut gains);
    Ok(gains)
}

/// Applies [`leakage_rank`] within every (setup, window, lag) group.
pub fn rank_groups(gains: &mut [GainRecord]) {
    let mut keys: Vec<(String, usize, usize)> = Vec::new();
    for g in gains.iter() {
        let key = (g.setup.clone(), g.window, g.lag);
        if !keys.contains(&key) {
            keys.push(key);
        }
    }
    for (setup, window, lag) in keys {
        let idx: Vec<usize> = (0..gains.len())
            .filter(|&i| gains[i].setup == setup && gains[i].window == window && gains[i].lag == lag)
            .collect();
        let mut group: Vec<GainRecord> = idx.iter().map(|&i| gains[i].clone()).collect();
        leakage_rank(&mut group);
        for (i, g) in idx.into_iter().zip(group) {
            gains[i] = g;
        }
    }
}
