//! Seeded synthetic daily temperature series.
//!
//! The generator layers an asymmetric annual cycle, a slow warming drift and
//! AR(1) weather noise, then pushes the result through a monotone
//! piecewise-linear quantile map so that the marginal summary lands exactly
//! on a requested [`ClimateProfile`]. Day-to-day dynamics survive the map.

use std::f64::consts::TAU;

use chrono::NaiveDate;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::series::{describe_values, TimeSeries};

/// Target marginal summary for [`climate_series`].
#[derive(Debug, Clone, PartialEq)]
pub struct ClimateProfile {
    pub start: NaiveDate,
    pub days: usize,
    pub mean: f64,
    pub std: f64,
    pub min: f64,
    pub median: f64,
    pub max: f64,
    /// AR(1) coefficient of the daily anomaly.
    pub persistence: f64,
    /// Innovation standard deviation before calibration, in degrees.
    pub noise: f64,
}

impl Default for ClimateProfile {
    fn default() -> Self {
        Self {
            start: NaiveDate::from_ymd_opt(2013, 1, 1).expect("valid date"),
            days: 1462,
            mean: 25.5,
            std: 7.35,
            min: 6.0,
            median: 27.71,
            max: 38.71,
            persistence: 0.7,
            noise: 1.6,
        }
    }
}

/// Raw series before calibration.
fn raw_series(profile: &ClimateProfile, seed: u64) -> Result<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, profile.noise)
        .map_err(|e| Error::InvalidArgument(format!("noise: {e}")))?;
    let mut anomaly = 0.0;
    let values = (0..profile.days)
        .map(|d| {
            let phase = TAU * d as f64 / 365.25;
            // cold January, hot May-June, flat monsoon plateau
            let cycle = -8.0 * (phase - 0.35).cos() - 2.5 * (2.0 * phase - 0.9).cos()
                + 1.2 * (3.0 * phase + 0.4).sin();
            let drift = 0.4 * d as f64 / 365.25;
            anomaly = profile.persistence * anomaly + noise.sample(&mut rng);
            25.0 + cycle + drift + anomaly
        })
        .collect();
    Ok(values)
}

/// Piecewise-linear interpolation through increasing `xs`.
fn interp(x: f64, xs: &[f64], ys: &[f64]) -> f64 {
    let seg = xs.partition_point(|&k| k <= x).clamp(1, xs.len() - 1) - 1;
    let (x0, x1) = (xs[seg], xs[seg + 1]);
    if x1 == x0 {
        return ys[seg];
    }
    ys[seg] + (ys[seg + 1] - ys[seg]) * (x - x0) / (x1 - x0)
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let s = describe_values(values);
    (s.mean, s.std)
}

/// Maps `raw` onto the profile's min, median, max, mean and sample std.
///
/// Knots sit at the raw minimum, lower quartile, the two middle order
/// statistics, upper quartile and maximum. The quartile targets are the two
/// free parameters: the mean condition fixes the upper one as a linear
/// function of the lower, and the std condition is solved by bracketing and
/// bisection.
pub(crate) fn calibrate(raw: &[f64], profile: &ClimateProfile) -> Result<Vec<f64>> {
    let n = raw.len();
    if n < 8 {
        return Err(Error::InvalidArgument(format!("calibration needs at least 8 points (got {n})")));
    }
    let mut sorted = raw.to_vec();
    sorted.sort_by(f64::total_cmp);
    let (lo_mid, hi_mid) = if n.is_multiple_of(2) {
        (sorted[n / 2 - 1], sorted[n / 2])
    } else {
        (sorted[n / 2], sorted[n / 2])
    };
    let xs = [sorted[0], sorted[n / 4], lo_mid, hi_mid, sorted[3 * n / 4], sorted[n - 1]];
    if xs[0] == xs[5] {
        return Err(Error::Numerical("degenerate raw series".into()));
    }
    let slope = (profile.max - profile.min) / (xs[5] - xs[0]);
    let half_gap = 0.5 * (hi_mid - lo_mid) * slope;

    let mapped = |q1: f64, q3: f64| -> Vec<f64> {
        let ys = [
            profile.min,
            q1,
            profile.median - half_gap,
            profile.median + half_gap,
            q3,
            profile.max,
        ];
        raw.iter().map(|&x| interp(x, &xs, &ys)).collect()
    };

    // mean is affine in (q1, q3)
    let base = mean_std(&mapped(0.0, 0.0)).0;
    let d1 = mean_std(&mapped(1.0, 0.0)).0 - base;
    let d3 = mean_std(&mapped(0.0, 1.0)).0 - base;
    if d3.abs() < 1e-12 {
        return Err(Error::Numerical("upper quartile has no leverage on the mean".into()));
    }
    let q3_for = |q1: f64| (profile.mean - base - d1 * q1) / d3;
    let feasible = |q1: f64| {
        let q3 = q3_for(q1);
        q1 > profile.min && q1 < profile.median - half_gap && q3 > profile.median + half_gap && q3 < profile.max
    };
    let excess = |q1: f64| mean_std(&mapped(q1, q3_for(q1))).1 - profile.std;

    let steps = 400;
    let grid: Vec<f64> = (1..steps)
        .map(|i| profile.min + (profile.median - half_gap - profile.min) * i as f64 / steps as f64)
        .filter(|&q1| feasible(q1))
        .collect();
    let bracket = grid
        .windows(2)
        .find(|w| excess(w[0]).signum() != excess(w[1]).signum())
        .ok_or_else(|| Error::Numerical("no quartile pair matches the requested mean and std".into()))?;
    let (mut a, mut b) = (bracket[0], bracket[1]);
    let fa = excess(a);
    for _ in 0..200 {
        let m = 0.5 * (a + b);
        if excess(m).signum() == fa.signum() {
            a = m;
        } else {
            b = m;
        }
    }
    let q1 = 0.5 * (a + b);
    Ok(mapped(q1, q3_for(q1)))
}

/// Seeded daily series matching `profile`'s marginal summary.
pub fn climate_series(profile: &ClimateProfile, seed: u64) -> Result<TimeSeries> {
    let raw = raw_series(profile, seed)?;
    let values = calibrate(&raw, profile)?;
    TimeSeries::daily("meantemp", profile.start, values)
}
