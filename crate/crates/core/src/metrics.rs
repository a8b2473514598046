//! RMSE, repetition aggregation, RMSE gain and leakage-sensitivity ranking.

use std::fmt;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};
use crate::splitting::SplitPlan;

pub fn rmse(predictions: &[f64], targets: &[f64]) -> Result<f64> {
    if predictions.len() != targets.len() {
        return Err(Error::InvalidArgument(format!(
            "length mismatch: {} predictions vs {} targets",
            predictions.len(),
            targets.len()
        )));
    }
    if predictions.is_empty() {
        return Err(Error::InvalidArgument("rmse of an empty set".into()));
    }
    let sse: f64 = predictions
        .iter()
        .zip(targets)
        .map(|(p, t)| (p - t).powi(2))
        .sum();
    Ok((sse / predictions.len() as f64).sqrt())
}

/// Two-sided 95% Student-t critical value with `df` degrees of freedom.
pub fn t_critical_95(df: usize) -> f64 {
    StudentsT::new(0.0, 1.0, df as f64)
        .expect("df >= 1")
        .inverse_cdf(0.975)
}

/// Summary of repeated-run RMSEs.
///
/// Dispersion fields are `None` for a single run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunStats {
    pub n_runs: usize,
    pub min: f64,
    pub max: f64,
    pub mean: f64,
    pub std: Option<f64>,
    pub stderr: Option<f64>,
    pub ci95: Option<(f64, f64)>,
    pub mean_optimal_epoch: Option<f64>,
    pub mean_last_epoch: Option<f64>,
}

impl RunStats {
    pub fn ci_half_width(&self) -> Option<f64> {
        self.ci95.map(|(lo, hi)| 0.5 * (hi - lo))
    }

    /// Builds stats from a published summary row. A row whose min exceeds
    /// its max has the two swapped; the returned flag reports that.
    pub fn from_summary(n_runs: usize, min: f64, max: f64, mean: f64, std: f64) -> (Self, bool) {
        let swapped = min > max;
        let (min, max) = if swapped { (max, min) } else { (min, max) };
        let stderr = std / (n_runs as f64).sqrt();
        let half = if n_runs >= 2 {
            t_critical_95(n_runs - 1) * stderr
        } else {
            0.0
        };
        let stats = RunStats {
            n_runs,
            min,
            max,
            mean,
            std: Some(std),
            stderr: Some(stderr),
            ci95: Some((mean - half, mean + half)),
            mean_optimal_epoch: None,
            mean_last_epoch: None,
        };
        (stats, swapped)
    }
}

/// Per-run epoch bookkeeping carried into [`aggregate`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochInfo {
    pub optimal_epoch: f64,
    pub last_epoch: f64,
}

/// Mean, sample standard deviation and a Student-t 95% interval
/// `mean ± t(0.975, n-1) · std / √n`.
pub fn aggregate(run_rmses: &[f64], epochs: Option<&[EpochInfo]>) -> Result<RunStats> {
    let n = run_rmses.len();
    if n == 0 {
        return Err(Error::InvalidArgument("aggregate of zero runs".into()));
    }
    if let Some(e) = epochs {
        if e.len() != n {
            return Err(Error::InvalidArgument(format!(
                "{} epoch records for {n} runs",
                e.len()
            )));
        }
    }
    // sort first so the result does not depend on run order
    let mut sorted = run_rmses.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mean = sorted.iter().sum::<f64>() / n as f64;
    let (std, stderr, ci95) = if n >= 2 {
        let var = sorted.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        let std = var.sqrt();
        let stderr = std / (n as f64).sqrt();
        let half = t_critical_95(n - 1) * stderr;
        (Some(std), Some(stderr), Some((mean - half, mean + half)))
    } else {
        (None, None, None)
    };
    let epoch_mean = |f: fn(&EpochInfo) -> f64| {
        epochs.map(|e| {
            let mut v: Vec<f64> = e.iter().map(f).collect();
            v.sort_by(f64::total_cmp);
            v.iter().sum::<f64>() / n as f64
        })
    };
    Ok(RunStats {
        n_runs: n,
        min: sorted[0],
        max: sorted[n - 1],
        mean,
        std,
        stderr,
        ci95,
        mean_optimal_epoch: epoch_mean(|e| e.optimal_epoch),
        mean_last_epoch: epoch_mean(|e| e.last_epoch),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Up,
    Down,
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Direction::Up => "up",
            Direction::Down => "down",
        })
    }
}

/// Relative RMSE change attributable to leakage, in percent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Gain {
    pub percent: f64,
    pub direction: Direction,
}

/// `(clean - leaky) / clean × 100`. Positive values mean the leaky pipeline
/// looks better than it should.
pub fn rmse_gain(clean: f64, leaky: f64) -> Result<Gain> {
    if !(clean > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "clean RMSE must be positive (got {clean})"
        )));
    }
    let percent = (clean - leaky) / clean * 100.0;
    let direction = if percent > 0.0 {
        Direction::Up
    } else {
        Direction::Down
    };
    Ok(Gain { percent, direction })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GainRecord {
    pub window: usize,
    pub lag: usize,
    pub plan: SplitPlan,
    /// Training setup the cells belong to.
    #[serde(default)]
    pub setup: String,
    pub rmse_clean: f64,
    pub rmse_leaky: f64,
    pub gain_percent: f64,
    pub direction: Direction,
    /// 1 = least sensitive within its (setup, window, lag) group.
    pub leakage_rank: usize,
}

impl GainRecord {
    pub fn new(
        setup: impl Into<String>,
        window: usize,
        lag: usize,
        plan: SplitPlan,
        rmse_clean: f64,
        rmse_leaky: f64,
    ) -> Result<Self> {
        let gain = rmse_gain(rmse_clean, rmse_leaky)?;
        Ok(Self {
            window,
            lag,
            plan,
            setup: setup.into(),
            rmse_clean,
            rmse_leaky,
            gain_percent: gain.percent,
            direction: gain.direction,
            leakage_rank: 0,
        })
    }
}

/// Ranks one configuration group by ascending |gain|; ties fall back to the
/// 2-way, 3-way, k-fold order. Records keep their input order.
pub fn leakage_rank(records: &mut [GainRecord]) {
    let mut order: Vec<usize> = (0..records.len()).collect();
    order.sort_by(|&a, &b| {
        let (ra, rb) = (&records[a], &records[b]);
        ra.gain_percent
            .abs()
            .total_cmp(&rb.gain_percent.abs())
            .then(ra.plan.ordinal().cmp(&rb.plan.ordinal()))
            .then(a.cmp(&b))
    });
    for (rank, idx) in order.into_iter().enumerate() {
        records[idx].leakage_rank = rank + 1;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn rmse_examples() {
        assert_eq!(rmse(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert_eq!(rmse(&[3.0], &[1.0]).unwrap(), 2.0);
        assert_abs_diff_eq!(rmse(&[1.0, 2.0], &[2.0, 4.0]).unwrap(), 2.5f64.sqrt(), epsilon = 1e-15);
        assert!(rmse(&[], &[]).is_err());
        assert!(rmse(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn t_table_values() {
        assert_abs_diff_eq!(t_critical_95(1), 12.706, epsilon = 1e-3);
        assert_abs_diff_eq!(t_critical_95(4), 2.776, epsilon = 1e-3);
        assert_abs_diff_eq!(t_critical_95(9), 2.262, epsilon = 1e-3);
    }

    #[test]
    fn aggregate_two_runs() {
        let s = aggregate(&[1.0, 3.0], None).unwrap();
        assert_eq!(s.mean, 2.0);
        assert_abs_diff_eq!(s.std.unwrap(), 2f64.sqrt(), epsilon = 1e-12);
        assert_abs_diff_eq!(s.stderr.unwrap(), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(s.ci_half_width().unwrap(), 12.706, epsilon = 1e-3);
    }

    #[test]
    fn aggregate_constant_and_single() {
        let s = aggregate(&[2.0, 2.0, 2.0], None).unwrap();
        assert_eq!(s.std, Some(0.0));
        assert_eq!(s.ci95, Some((2.0, 2.0)));
        let one = aggregate(&[1.7], None).unwrap();
        assert_eq!((one.std, one.ci95), (None, None));
        assert!(aggregate(&[], None).is_err());
    }

    #[test]
    fn aggregate_five_runs_near_published_interval() {
        let s = aggregate(&[1.58, 1.58, 1.58, 1.59, 1.60], None).unwrap();
        assert_abs_diff_eq!(s.mean, 1.586, epsilon = 1e-9);
        let half = s.ci_half_width().unwrap();
        assert_abs_diff_eq!(half, 2.776 * s.std.unwrap() / 5f64.sqrt(), epsilon = 1e-3);
        assert_abs_diff_eq!(half, 0.011, epsilon = 0.001);
    }

    #[test]
    fn aggregate_epochs() {
        let e = [
            EpochInfo { optimal_epoch: 40.0, last_epoch: 50.0 },
            EpochInfo { optimal_epoch: 60.0, last_epoch: 70.0 },
        ];
        let s = aggregate(&[1.0, 2.0], Some(&e)).unwrap();
        assert_eq!(s.mean_optimal_epoch, Some(50.0));
        assert_eq!(s.mean_last_epoch, Some(60.0));
        assert!(aggregate(&[1.0], Some(&e)).is_err());
    }

    #[test]
    fn swapped_summary_row() {
        let (s, swapped) = RunStats::from_summary(10, 1.88, 1.79, 1.82, 0.03);
        assert!(swapped);
        assert!(s.min <= s.mean && s.mean <= s.max);
    }

    #[test]
    fn gain_examples() {
        let g = rmse_gain(1.9359, 1.8646).unwrap();
        assert_abs_diff_eq!(g.percent, 3.68, epsilon = 0.01);
        assert_eq!(g.direction, Direction::Up);
        let g = rmse_gain(1.7533, 1.7964).unwrap();
        assert_abs_diff_eq!(g.percent, -2.46, epsilon = 0.01);
        assert_eq!(g.direction, Direction::Down);
        assert!(rmse_gain(0.0, 1.0).is_err());
        assert!(rmse_gain(-1.0, 1.0).is_err());
    }

    fn rec(plan: SplitPlan, gain: f64) -> GainRecord {
        GainRecord::new("s", 10, 1, plan, 100.0, 100.0 - gain).unwrap()
    }

    #[test]
    fn rank_examples() {
        let plans = [SplitPlan::two_way(), SplitPlan::three_way(), SplitPlan::k_fold(10)];
        for gains in [[0.16, 1.93, 3.68], [2.27, 2.75, 7.17], [1.0, 1.0, 1.0]] {
            let mut rs: Vec<_> = plans.iter().zip(gains).map(|(p, g)| rec(*p, g)).collect();
            leakage_rank(&mut rs);
            assert_eq!(rs.iter().map(|r| r.leakage_rank).collect::<Vec<_>>(), vec![1, 2, 3]);
        }
        let mut rs: Vec<_> = plans.iter().zip([-2.46, 1.64, 19.29]).map(|(p, g)| rec(*p, g)).collect();
        leakage_rank(&mut rs);
        assert_eq!(rs.iter().map(|r| r.leakage_rank).collect::<Vec<_>>(), vec![2, 1, 3]);
    }

    proptest! {
        #[test]
        fn gain_identities(c in 0.01f64..100.0, l in 0.01f64..100.0, alpha in 0.01f64..100.0) {
            prop_assert_eq!(rmse_gain(c, c).unwrap().percent, 0.0);
            let a = rmse_gain(c, l).unwrap().percent;
            let b = rmse_gain(alpha * c, alpha * l).unwrap().percent;
            prop_assert!((a - b).abs() < 1e-9 * (1.0 + a.abs()));
            prop_assert_eq!(a > 0.0, l < c);
        }

        #[test]
        fn aggregate_permutation_invariant(mut runs in prop::collection::vec(0.1f64..10.0, 2..12)) {
            let a = aggregate(&runs, None).unwrap();
            runs.reverse();
            let b = aggregate(&runs, None).unwrap();
            prop_assert_eq!(&a, &b);
            let (lo, hi) = a.ci95.unwrap();
            prop_assert!(a.min <= a.mean + 1e-12 && a.mean <= a.max + 1e-12);
            prop_assert!(lo <= a.mean && a.mean <= hi);
            prop_assert!((a.stderr.unwrap() - a.std.unwrap() / (runs.len() as f64).sqrt()).abs() < 1e-12);
        }

        #[test]
        fn ranks_form_permutation(gains in prop::collection::vec(-30.0f64..30.0, 1..8)) {
            let plans = [SplitPlan::two_way(), SplitPlan::three_way(), SplitPlan::k_fold(10)];
            let mut rs: Vec<_> = gains.iter().enumerate().map(|(i, g)| rec(plans[i % 3], *g)).collect();
            leakage_rank(&mut rs);
            let mut ranks: Vec<usize> = rs.iter().map(|r| r.leakage_rank).collect();
            ranks.sort_unstable();
            prop_assert_eq!(ranks, (1..=gains.len()).collect::<Vec<_>>());
            let mut by_rank = rs.clone();
            by_rank.sort_by_key(|r| r.leakage_rank);
            prop_assert!(by_rank.windows(2).all(|w| w[0].gain_percent.abs() <= w[1].gain_percent.abs()));
        }
    }
}
