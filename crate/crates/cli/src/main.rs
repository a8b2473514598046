use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use tsleak_core::runner::{
    self, audit_experiment, cells_csv, gains_csv, gains_from_cells, load_report, read_cells_csv,
    report_json, write_report, CellAudit,
};
use tsleak_core::{
    climate_series, describe, load_csv, run_experiment, seasonal_decompose, write_csv, ClimateProfile,
    Error, ExperimentConfig, RunOptions,
};

/// Leakage-aware evaluation harness for univariate time-series forecasting.
#[derive(Parser)]
#[command(name = "tsleak", version)]
struct Cli {
    /// Base seed, overriding the config file.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    workers: Option<usize>,

    /// Skip failing cells instead of aborting.
    #[arg(long, global = true)]
    keep_going: bool,

    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Descriptive statistics and seasonal decomposition summary of a series.
    Stats {
        csv: PathBuf,
        #[arg(long, default_value = "meantemp")]
        value_column: String,
        #[arg(long, default_value = "date")]
        date_column: String,
        #[arg(long, default_value_t = 365)]
        period: usize,
    },
    /// Run a full experiment grid.
    Run { config: PathBuf },
    /// Split and audit every cell of a grid without training.
    Audit { config: PathBuf },
    /// Recompute gains from the cells.csv of a clean and a leaky report.
    Gain { clean: PathBuf, leaky: PathBuf },
    /// Print a stored report.
    Report {
        run_dir: PathBuf,
        #[arg(long, value_enum, default_value_t = Format::Csv)]
        format: Format,
    },
    /// Write the calibrated synthetic climate series as CSV.
    Synth {
        path: PathBuf,
        #[arg(long, default_value_t = 1462)]
        days: usize,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Json,
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<Error>() {
        Some(e) if e.is_contamination() => 3,
        Some(Error::Config(_) | Error::InvalidArgument(_)) => 1,
        _ => 2,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn execute(cli: Cli) -> Result<()> {
    match &cli.command {
        Command::Stats {
            csv,
            value_column,
            date_column,
            period,
        } => stats(csv, value_column, date_column, *period),
        Command::Run { config } => run(&cli, config),
        Command::Audit { config } => audit(&cli, config),
        Command::Gain { clean, leaky } => gain(&cli, clean, leaky),
        Command::Report { run_dir, format } => report(run_dir, *format),
        Command::Synth { path, days } => synth(cli.seed, path, *days),
    }
}

fn stats(csv: &Path, value_column: &str, date_column: &str, period: usize) -> Result<()> {
    let series = load_csv(csv, value_column, date_column)?;
    let d = describe(&series);
    println!("series   {} ({} points)", series.name(), d.count);
    if let (Some(first), Some(last)) = (series.timestamps().first(), series.timestamps().last()) {
        println!("range    {first} .. {last}");
    }
    println!("mean     {:.4}", d.mean);
    println!("std      {:.4}", d.std);
    println!("min      {:.4}", d.min);
    println!("median   {:.4}", d.median);
    println!("max      {:.4}", d.max);
    match seasonal_decompose(&series, period) {
        Ok(dec) => {
            let profile = dec.seasonal_profile();
            let lo = profile.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = profile.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let trend: Vec<f64> = dec.trend.iter().flatten().copied().collect();
            let resid: Vec<f64> = dec.residual.iter().flatten().copied().collect();
            let rms = (resid.iter().map(|r| r * r).sum::<f64>() / resid.len().max(1) as f64).sqrt();
            println!("decomposition (period {period}, trend defined on {} points)", dec.defined_len());
            if let (Some(a), Some(b)) = (trend.first(), trend.last()) {
                println!("  trend      {a:.4} -> {b:.4}");
            }
            println!("  seasonal   [{lo:.4}, {hi:.4}]");
            println!("  residual   rms {rms:.4}");
        }
        Err(e) => println!("decomposition skipped: {e}"),
    }
    Ok(())
}

fn load_config(path: &Path) -> Result<ExperimentConfig> {
    ExperimentConfig::load(path).with_context(|| format!("loading {}", path.display()))
}

fn out_dir(cli: &Cli, cfg: &ExperimentConfig) -> PathBuf {
    cli.out.clone().unwrap_or_else(|| PathBuf::from("runs").join(&cfg.name))
}

fn run(cli: &Cli, config: &Path) -> Result<()> {
    let cfg = load_config(config)?;
    let dir = out_dir(cli, &cfg);
    let options = RunOptions {
        base_seed: cli.seed,
        workers: cli.workers,
        keep_going: cli.keep_going.then_some(true),
        loss_dir: cfg.save_loss_history.then(|| dir.join("loss")),
    };
    let report = run_experiment(&cfg, &options)?;
    write_report(&report, &dir)?;
    println!(
        "{}: {} cells, {} runs, {} gains -> {}",
        report.name,
        report.cells.len(),
        report.total_runs(),
        report.gains.len(),
        dir.display()
    );
    for c in &report.cells {
        let ci = c
            .stats
            .ci95
            .map(|(lo, hi)| format!("({lo:.4}, {hi:.4})"))
            .unwrap_or_else(|| "-".into());
        println!("  {:<40} mean {:.4} {ci} overlap {}", c.key.to_string(), c.stats.mean, c.max_overlap);
    }
    for g in &report.gains {
        println!(
            "  gain {} W={} L={} {:<8} {:>7.2}% {} rank {}",
            g.setup,
            g.window,
            g.lag,
            g.plan.label(),
            g.gain_percent,
            g.direction,
            g.leakage_rank
        );
    }
    for f in &report.failures {
        eprintln!("  failed {}: {}", f.cell, f.error);
    }
    for n in &report.notes {
        println!("  note: {n}");
    }
    Ok(())
}

fn audit_csv(audits: &[CellAudit]) -> String {
    let mut s = String::from("name,window,lag,plan,mode,folds,contaminated_folds,max_overlap,clearing_gap,error\n");
    for a in audits {
        let contaminated = a.folds.iter().filter(|f| f.is_contaminated).count();
        let gap = a.clearing_gap.map(|g| g.to_string()).unwrap_or_default();
        let error = a.error.as_deref().unwrap_or("").replace(['"', ','], " ");
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{contaminated},{},{gap},{error}",
            a.key.setup,
            a.key.window,
            a.key.lag,
            a.key.plan.label(),
            a.key.mode,
            a.folds.len(),
            a.max_overlap
        );
    }
    s
}

fn audit(cli: &Cli, config: &Path) -> Result<()> {
    let cfg = load_config(config)?;
    let audits = audit_experiment(&cfg, cli.seed)?;
    let csv = audit_csv(&audits);
    match &cli.out {
        Some(dir) => {
            fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
            let path = dir.join("audit.csv");
            fs::write(&path, &csv).with_context(|| format!("writing {}", path.display()))?;
        }
        None => print!("{csv}"),
    }
    let failed: Vec<&CellAudit> = audits.iter().filter(|a| a.error.is_some()).collect();
    if !failed.is_empty() && !cli.keep_going {
        let first = failed[0];
        anyhow::bail!(Error::Cell {
            cell: first.key.to_string(),
            source: Box::new(Error::Data(first.error.clone().unwrap_or_default())),
        });
    }
    Ok(())
}

fn gain(cli: &Cli, clean: &Path, leaky: &Path) -> Result<()> {
    let gains = gains_from_cells(&read_cells_csv(clean)?, &read_cells_csv(leaky)?)?;
    if gains.is_empty() {
        anyhow::bail!(Error::Data("no clean/leaky cell pairs match".into()));
    }
    let csv = gains_csv(&gains)?;
    match &cli.out {
        Some(dir) => {
            fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
            let path = dir.join(runner::GAINS_FILE);
            fs::write(&path, &csv).with_context(|| format!("writing {}", path.display()))?;
        }
        None => print!("{csv}"),
    }
    Ok(())
}

fn report(run_dir: &Path, format: Format) -> Result<()> {
    let report = load_report(run_dir)?;
    match format {
        Format::Json => println!("{}", report_json(&report)?),
        Format::Csv => {
            print!("{}", cells_csv(&report)?);
            println!();
            print!("{}", gains_csv(&report.gains)?);
        }
    }
    Ok(())
}

fn synth(seed: Option<u64>, path: &Path, days: usize) -> Result<()> {
    let profile = ClimateProfile {
        days,
        ..ClimateProfile::default()
    };
    let series = climate_series(&profile, seed.unwrap_or(7))?;
    write_csv(&series, path, "meantemp", "date")?;
    println!("{} points -> {}", series.len(), path.display());
    Ok(())
}
