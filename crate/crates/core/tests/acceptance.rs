//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit when any
//! criterion fails.
//!
//! The LSTM criteria run in fast mode (16 hidden units, 30 epochs) unless
//! `TSLEAK_FULL=1` is set, which switches to 64 units and 100 epochs.
//! `TSLEAK_CLIMATE_CSV` points the suite at a different daily series with
//! `date` and `meantemp` columns.

use std::collections::BTreeSet;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tsleak_core::forecaster::{gradient_check, gradient_check_with_fault, GradientFault};
use tsleak_core::metrics::t_critical_95;
use tsleak_core::runner::{rank_groups, write_report, DatasetConfig, CELLS_FILE, GAINS_FILE};
use tsleak_core::{
    aggregate, apply_buffer, audit, load_csv, make_sequences, minimal_clearing_gap, rmse_gain, run_experiment,
    split, ExperimentConfig, ExperimentReport, LstmModel, Mode, Order, RunOptions, SequencePair,
    GainRecord, SplitPlan, SplitResult, SplitSpec, TimeSeries, TrainConfig, WindowConfig,
};

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        passed,
        detail: detail.into(),
    }
}

fn climate_path() -> PathBuf {
    std::env::var_os("TSLEAK_CLIMATE_CSV")
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/climate_synthetic.csv"))
}

fn climate() -> TimeSeries {
    load_csv(climate_path(), "meantemp", "date").expect("climate series")
}

fn full_mode() -> bool {
    std::env::var("TSLEAK_FULL").is_ok_and(|v| v == "1")
}

fn sliding_count(n: usize, w: usize, l: usize) -> usize {
    let mut count = 0;
    let mut t = 0;
    while t + w + l - 1 < n {
        count += 1;
        t += 1;
    }
    count
}

fn window_count() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut mismatches = 0;
    for _ in 0..200 {
        let n = rng.random_range(1..=64);
        let w = rng.random_range(1..=12);
        let l = rng.random_range(1..=3);
        let values: Vec<f64> = (0..n).map(|i| i as f64).collect();
        let got = make_sequences(&values, 0, WindowConfig::new(w, l).unwrap()).len();
        if got != sliding_count(n, w, l) {
            mismatches += 1;
        }
    }
    let series = climate();
    let full = make_sequences(series.values(), 0, WindowConfig::new(10, 1).unwrap()).len();
    let elapsed = start.elapsed();
    outcome(
        mismatches == 0 && full == 1452 && elapsed < Duration::from_secs(1),
        format!("200 random cases, {mismatches} mismatches; N={} W=10 L=1 -> {full} pairs; {elapsed:.2?}", series.len()),
    )
}

fn all_plans() -> [SplitPlan; 3] {
    [SplitPlan::two_way(), SplitPlan::three_way(), SplitPlan::k_fold(10)]
}

fn spec(plan: SplitPlan, mode: Mode, order: Order, w: usize, l: usize, seed: u64) -> SplitSpec {
    SplitSpec {
        plan,
        mode,
        order,
        window: WindowConfig::new(w, l).unwrap(),
        seed: Some(seed),
    }
}

fn footprint_set<'a>(pairs: impl Iterator<Item = &'a SequencePair>) -> BTreeSet<usize> {
    pairs
        .flat_map(|p| (p.input_start..p.input_start + p.input.len()).chain([p.target_index]))
        .collect()
}

/// Set-intersection oracle for one split: (overlap, contaminated test pairs).
fn naive_audit(r: &SplitResult) -> (BTreeSet<usize>, usize) {
    let fit = footprint_set(r.fitting_sets().flat_map(|s| s.pairs.iter()));
    let test = footprint_set(r.test.pairs.iter());
    let overlap: BTreeSet<usize> = fit.intersection(&test).copied().collect();
    let touching = r
        .test
        .pairs
        .iter()
        .filter(|p| !footprint_set(std::iter::once(*p)).is_disjoint(&fit))
        .count();
    (overlap, touching)
}

fn exhaustive_small() -> (usize, usize) {
    let plans = [
        SplitPlan::two_way(),
        SplitPlan::three_way(),
        SplitPlan::k_fold(2),
        SplitPlan::k_fold(3),
        SplitPlan::k_fold(5),
    ];
    let (mut checked, mut mismatches) = (0, 0);
    for n in 2..=64usize {
        let values: Vec<f64> = (0..n).map(|i| i as f64).collect();
        let series = TimeSeries::daily("small", chrono::NaiveDate::from_ymd_opt(2020, 1, 1).unwrap(), values).unwrap();
        for w in 1..=8 {
            for l in 1..=3 {
                for plan in plans {
                    for (mode, order) in [
                        (Mode::Leaky, Order::Sequential),
                        (Mode::Leaky, Order::Random),
                        (Mode::Clean, Order::Sequential),
                    ] {
                        let Ok(results) = split(&series, &spec(plan, mode, order, w, l, n as u64)) else {
                            continue;
                        };
                        for r in &results {
                            let got = audit(r);
                            let (overlap, touching) = naive_audit(r);
                            let sample: Vec<usize> = overlap.iter().take(20).copied().collect();
                            checked += 1;
                            if got.overlap_count != overlap.len()
                                || got.is_contaminated == overlap.is_empty()
                                || got.contaminated_test_pairs != touching
                                || got.overlap_sample != sample
                                || (mode == Mode::Clean && got.is_contaminated)
                            {
                                mismatches += 1;
                            }
                        }
                    }
                }
            }
        }
    }
    (checked, mismatches)
}

/// Sequential leaky splits of the climate sweep, for the buffer criterion.
fn sweep(series: &TimeSeries) -> (Vec<String>, Vec<(usize, usize, SplitResult)>) {
    let mut problems = Vec::new();
    let mut leaky = Vec::new();
    for w in [3, 7, 10] {
        for l in [1, 2, 3] {
            for plan in all_plans() {
                for mode in [Mode::Clean, Mode::Leaky] {
                    let results = match split(series, &spec(plan, mode, Order::Sequential, w, l, 0)) {
                        Ok(r) => r,
                        Err(e) => {
                            problems.push(format!("W={w} L={l} {} {mode}: {e}", plan.label()));
                            continue;
                        }
                    };
                    for r in results {
                        let report = audit(&r);
                        if mode == Mode::Clean && report.overlap_count != 0 {
                            problems.push(format!("clean W={w} L={l} {} overlap {}", plan.label(), report.overlap_count));
                        }
                        if mode == Mode::Leaky && matches!(plan, SplitPlan::TwoWay { .. }) && report.overlap_count == 0 {
                            problems.push(format!("leaky two-way W={w} L={l} not contaminated"));
                        }
                        if mode == Mode::Leaky && report.is_contaminated {
                            leaky.push((w, l, r));
                        }
                    }
                }
            }
        }
    }
    (problems, leaky)
}

fn clean_soundness() -> Outcome {
    let start = Instant::now();
    let series = climate();
    let (problems, leaky) = sweep(&series);
    let (checked, mismatches) = exhaustive_small();
    let elapsed = start.elapsed();
    outcome(
        problems.is_empty() && mismatches == 0 && elapsed < Duration::from_secs(10),
        format!(
            "sweep: {} problems, {} contaminated leaky splits; oracle: {checked} small splits, {mismatches} mismatches; {elapsed:.2?}{}",
            problems.len(),
            leaky.len(),
            problems.first().map(|p| format!("; first: {p}")).unwrap_or_default()
        ),
    )
}

fn gradient_batch(rng: &mut ChaCha8Rng) -> Vec<SequencePair> {
    (0..3)
        .map(|i| SequencePair {
            input: (0..5).map(|_| rng.random_range(-1.0..1.0)).collect(),
            target: rng.random_range(-1.0..1.0),
            input_start: i,
            target_index: i + 5,
        })
        .collect()
}

fn gradient_correctness() -> Outcome {
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    for seed in 0..10 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let model = LstmModel::init(4, &mut rng);
        let batch = gradient_batch(&mut rng);
        worst = worst.max(gradient_check(&model, &batch, 1e-5).unwrap());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let model = LstmModel::init(4, &mut rng);
    let batch = gradient_batch(&mut rng);
    let mutated = gradient_check_with_fault(&model, &batch, 1e-5, GradientFault::ZeroForgetGate).unwrap();
    let elapsed = start.elapsed();
    outcome(
        worst < 1e-4 && mutated > 1e-2 && elapsed < Duration::from_secs(5),
        format!("max relative error {worst:.2e} over 10 seeds; forget-gate mutation {mutated:.2e}; {elapsed:.2?}"),
    )
}

/// (window, lag, plan, clean, leaky, gain %, reference rank)
const REFERENCE_GAINS: [(usize, usize, &str, f64, f64, f64, usize); 15] = [
    (10, 1, "2-way", 1.6596, 1.6569, 0.16, 1),
    (10, 1, "3-way", 1.6848, 1.6522, 1.93, 2),
    (10, 1, "10-fold", 1.9359, 1.8646, 3.68, 3),
    (3, 1, "2-way", 1.6518, 1.6493, 0.15, 1),
    (3, 1, "3-way", 1.7312, 1.6516, 4.60, 3),
    (3, 1, "10-fold", 1.7308, 1.6476, 4.81, 2),
    (7, 1, "2-way", 1.6870, 1.6487, 2.27, 1),
    (7, 1, "3-way", 1.7182, 1.6710, 2.75, 2),
    (7, 1, "10-fold", 1.7607, 1.6347, 7.17, 3),
    (10, 2, "2-way", 1.7533, 1.7964, -2.46, 1),
    (10, 2, "3-way", 1.8800, 1.8492, 1.64, 2),
    (10, 2, "10-fold", 2.0868, 1.6841, 19.29, 3),
    (10, 3, "2-way", 2.0325, 1.9804, 2.56, 1),
    (10, 3, "3-way", 2.6100, 2.4802, 4.97, 2),
    (10, 3, "10-fold", 2.8925, 2.2987, 20.51, 3),
];

fn metric_golden_values() -> Outcome {
    let mut worst: f64 = 0.0;
    let mut records = Vec::new();
    for (w, l, plan, clean, leaky, expected, _) in REFERENCE_GAINS {
        let gain = rmse_gain(clean, leaky).unwrap();
        worst = worst.max((gain.percent - expected).abs());
        let plan = match plan {
            "2-way" => SplitPlan::two_way(),
            "3-way" => SplitPlan::three_way(),
            _ => SplitPlan::k_fold(10),
        };
        records.push(GainRecord::new("reference", w, l, plan, clean, leaky).unwrap());
    }
    rank_groups(&mut records);
    let rank_diffs: Vec<String> = records
        .iter()
        .zip(REFERENCE_GAINS)
        .filter(|(r, row)| r.leakage_rank != row.6)
        .map(|(r, row)| format!("W={} L={} {} rank {} (reference {})", r.window, r.lag, r.plan.label(), r.leakage_rank, row.6))
        .collect();
    let mut detail = format!("15 rows, max |gain - reference| = {worst:.4} pp");
    if !rank_diffs.is_empty() {
        detail.push_str(&format!("; |gain| ranking differs from reference ranks at: {}", rank_diffs.join(", ")));
    }
    outcome(worst <= 0.02, detail)
}

fn lstm_train_config() -> TrainConfig {
    let (hidden_size, epochs) = if full_mode() { (64, 100) } else { (16, 30) };
    TrainConfig {
        hidden_size,
        epochs,
        early_stopping: true,
        patience: 10,
        ..TrainConfig::default()
    }
}

fn lstm_grid(name: &str, variants: Vec<(usize, usize)>, plans: Vec<SplitPlan>, repetitions: usize, seed: u64) -> ExperimentConfig {
    ExperimentConfig {
        name: name.into(),
        dataset: DatasetConfig {
            path: Some(climate_path()),
            date_column: "date".into(),
            value_column: "meantemp".into(),
            synthetic_seed: None,
        },
        windows: variants.iter().map(|v| v.0).collect::<BTreeSet<_>>().into_iter().collect(),
        lags: variants.iter().map(|v| v.1).collect::<BTreeSet<_>>().into_iter().collect(),
        variants: Some(variants),
        plans,
        modes: vec![Mode::Leaky, Mode::Clean],
        order: Order::Sequential,
        model: "lstm".into(),
        train: lstm_train_config(),
        setups: Vec::new(),
        repetitions,
        base_seed: Some(seed),
        workers: None,
        keep_going: false,
        save_loss_history: false,
    }
}

fn gain_of(report: &ExperimentReport, w: usize, l: usize, plan: &str) -> f64 {
    report.gain("base", w, l, plan).map_or(f64::NAN, |g| g.gain_percent)
}

fn directional_leakage() -> Outcome {
    let start = Instant::now();
    let cfg = lstm_grid("direction", vec![(10, 3), (10, 1)], vec![SplitPlan::two_way(), SplitPlan::k_fold(10)], 10, 2025);
    let report = run_experiment(&cfg, &RunOptions::default()).unwrap();
    let clean = report.cell("base", 10, 3, "10-fold", Mode::Clean).unwrap().stats.mean;
    let leaky = report.cell("base", 10, 3, "10-fold", Mode::Leaky).unwrap().stats.mean;
    let fold_gain = gain_of(&report, 10, 3, "10-fold");
    let base_gain = gain_of(&report, 10, 1, "2-way");
    let elapsed = start.elapsed();
    let budget = Duration::from_secs(if full_mode() { 30 * 60 } else { 5 * 60 });
    outcome(
        leaky < clean && fold_gain > 5.0 && base_gain.abs() < 5.0 && elapsed <= budget,
        format!(
            "{} mode H={} epochs={}: 10-fold L=3 clean {clean:.4} leaky {leaky:.4} gain {fold_gain:.2}% (need > 5); 2-way L=1 gain {base_gain:.2}% (need |.| < 5); {elapsed:.1?}",
            if full_mode() { "full" } else { "fast" },
            cfg.train.hidden_size,
            cfg.train.epochs
        ),
    )
}

fn monotone_sensitivity() -> Outcome {
    let mut holds = 0;
    let mut rows = Vec::new();
    for (i, seed) in [11u64, 22, 33].into_iter().enumerate() {
        let cfg = lstm_grid(
            &format!("trend-{i}"),
            vec![(10, 1), (10, 2), (10, 3)],
            vec![SplitPlan::k_fold(10)],
            2,
            seed,
        );
        let report = run_experiment(&cfg, &RunOptions::default()).unwrap();
        let g: Vec<f64> = (1..=3).map(|l| gain_of(&report, 10, l, "10-fold").abs()).collect();
        let ok = g[2] >= g[1] && g[1] >= g[0];
        holds += ok as usize;
        rows.push(format!("[{:.2}, {:.2}, {:.2}]{}", g[0], g[1], g[2], if ok { "" } else { "x" }));
    }
    outcome(holds >= 2, format!("|gain| for L=1,2,3 per replication: {}; monotone in {holds}/3", rows.join(" ")))
}

fn buffer_mitigation() -> Outcome {
    let start = Instant::now();
    let series = climate();
    let (_, leaky) = sweep(&series);
    let mut failures = Vec::new();
    for (w, l, r) in &leaky {
        let gap = minimal_clearing_gap(r);
        let buffered = apply_buffer(r, w + l).map(|b| audit(&b).is_contaminated);
        if !matches!(gap, Ok(g) if g <= w + l) || !matches!(buffered, Ok(false)) {
            failures.push(format!("W={w} L={l} fold {}", r.fold_index));
        }
    }
    let elapsed = start.elapsed();
    outcome(
        failures.is_empty() && !leaky.is_empty() && elapsed < Duration::from_secs(10),
        format!("{} contaminated leaky splits, {} not cleared by W+L; {elapsed:.2?}", leaky.len(), failures.len()),
    )
}

fn reproducibility() -> Outcome {
    let mut cfg = lstm_grid("repro", vec![(5, 1)], vec![SplitPlan::two_way(), SplitPlan::k_fold(3)], 2, 77);
    cfg.train = TrainConfig {
        hidden_size: 8,
        epochs: 5,
        early_stopping: false,
        ..TrainConfig::default()
    };
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    for dir in &dirs {
        let report = run_experiment(&cfg, &RunOptions::default()).unwrap();
        write_report(&report, dir.path()).unwrap();
    }
    let identical = [CELLS_FILE, GAINS_FILE, "runs.csv", "gain_plot.csv"].iter().all(|f| {
        std::fs::read(dirs[0].path().join(f)).unwrap() == std::fs::read(dirs[1].path().join(f)).unwrap()
    });

    cfg.model = "persistence".into();
    let mut rmses = |seed| {
        cfg.base_seed = Some(seed);
        let r = run_experiment(&cfg, &RunOptions::default()).unwrap();
        r.cells.iter().flat_map(|c| c.runs.iter().map(|run| run.rmse)).collect::<Vec<f64>>()
    };
    let a = rmses(1);
    let b = rmses(987_654_321);
    outcome(
        identical && a == b,
        format!("lstm CSV reports byte-identical: {identical}; persistence RMSE identical across seeds: {}", a == b),
    )
}

fn aggregation() -> Outcome {
    let stats = aggregate(&[1.0, 3.0], None).unwrap();
    let half = stats.ci_half_width().unwrap();
    let formula = t_critical_95(1) * stats.std.unwrap() / 2f64.sqrt();
    let passed = (stats.mean - 2.0).abs() < 1e-12
        && (stats.std.unwrap() - 2f64.sqrt()).abs() < 1e-12
        && (stats.stderr.unwrap() - 1.0).abs() < 1e-12
        && (half - formula).abs() < 1e-6
        && (half - 12.706).abs() < 1e-3;
    outcome(passed, format!("mean {}, std {:.4}, stderr {}, half-width {half:.6}", stats.mean, stats.std.unwrap(), stats.stderr.unwrap()))
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome); 9] = [
        ("window-count formula", window_count),
        ("clean-mode soundness", clean_soundness),
        ("gradient correctness", gradient_correctness),
        ("metric golden values", metric_golden_values),
        ("directional leakage reproduction", directional_leakage),
        ("monotone sensitivity trend", monotone_sensitivity),
        ("buffer mitigation", buffer_mitigation),
        ("reproducibility", reproducibility),
        ("aggregation", aggregation),
    ];
    let only: Option<Vec<usize>> = std::env::var("TSLEAK_CRITERIA")
        .ok()
        .map(|s| s.split(',').filter_map(|x| x.trim().parse().ok()).collect());
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let n = i + 1;
        if only.as_ref().is_some_and(|o| !o.contains(&n)) {
            continue;
        }
        let result = check();
        println!(
            "criterion {n} {:<4} {name}: {}",
            if result.passed { "PASS" } else { "FAIL" },
            result.detail
        );
        failed += !result.passed as usize;
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    }
}
