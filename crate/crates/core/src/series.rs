//! Raw univariate series: loading, validation, descriptive statistics and a
//! classical additive seasonal decomposition.

use std::fs::File;
use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Ordered daily observations.
///
/// Construction validates that timestamps are strictly increasing, that both
/// vectors have the same non-zero length and that every value is finite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeSeries {
    name: String,
    timestamps: Vec<NaiveDate>,
    values: Vec<f64>,
}

impl TimeSeries {
    pub fn new(
        name: impl Into<String>,
        timestamps: Vec<NaiveDate>,
        values: Vec<f64>,
    ) -> Result<Self> {
        if timestamps.len() != values.len() {
            return Err(Error::Data(format!(
                "{} timestamps but {} values",
                timestamps.len(),
                values.len()
            )));
        }
        if values.is_empty() {
            return Err(Error::Data("no data rows".into()));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Data(format!("non-finite value at index {i}")));
        }
        if let Some(i) = timestamps.windows(2).position(|w| w[1] <= w[0]) {
            let kind = if timestamps[i + 1] == timestamps[i] {
                "duplicate"
            } else {
                "out-of-order"
            };
            return Err(Error::Data(format!(
                "{kind} timestamp {} at index {}",
                timestamps[i + 1],
                i + 1
            )));
        }
        Ok(Self {
            name: name.into(),
            timestamps,
            values,
        })
    }

    /// Daily series starting at `start` with consecutive dates.
    pub fn daily(name: impl Into<String>, start: NaiveDate, values: Vec<f64>) -> Result<Self> {
        let timestamps = start
            .iter_days()
            .take(values.len())
            .collect::<Vec<_>>();
        Self::new(name, timestamps, values)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn timestamps(&self) -> &[NaiveDate] {
        &self.timestamps
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Reads a comma-separated file with a header row.
///
/// Rows must already be in chronological order; duplicates and reversals are
/// rejected with the offending (1-based, header excluded) row number.
pub fn load_csv(
    path: impl AsRef<Path>,
    value_column: &str,
    date_column: &str,
) -> Result<TimeSeries> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(file);

    let headers = reader.headers()?.clone();
    let find = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Data(format!("column '{name}' not found in {}", path.display())))
    };
    let date_idx = find(date_column)?;
    let value_idx = find(value_column)?;

    let mut timestamps = Vec::new();
    let mut values = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let row = i + 1;
        let record = record?;
        let raw_date = record
            .get(date_idx)
            .ok_or_else(|| Error::Data(format!("row {row}: missing date field")))?;
        let raw_value = record
            .get(value_idx)
            .ok_or_else(|| Error::Data(format!("row {row}: missing value field")))?;
        let date = parse_date(raw_date)
            .ok_or_else(|| Error::Data(format!("row {row}: unparseable date '{raw_date}'")))?;
        let value: f64 = raw_value
            .parse()
            .map_err(|_| Error::Data(format!("row {row}: unparseable value '{raw_value}'")))?;
        if !value.is_finite() {
            return Err(Error::Data(format!("row {row}: non-finite value '{raw_value}'")));
        }
        if let Some(prev) = timestamps.last() {
            if date == *prev {
                return Err(Error::Data(format!("row {row}: duplicate timestamp {date}")));
            }
            if date < *prev {
                return Err(Error::Data(format!("row {row}: out-of-order timestamp {date}")));
            }
        }
        timestamps.push(date);
        values.push(value);
    }
    if values.is_empty() {
        return Err(Error::Data("no data rows".into()));
    }

    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| value_column.to_string());
    TimeSeries::new(name, timestamps, values)
}

// ISO-8601 date, optionally followed by a time component ("2013-01-01 00:00:00").
fn parse_date(raw: &str) -> Option<NaiveDate> {
    let head = raw.split(['T', ' ']).next()?;
    NaiveDate::parse_from_str(head, "%Y-%m-%d").ok()
}

pub fn write_csv(
    series: &TimeSeries,
    path: impl AsRef<Path>,
    value_column: &str,
    date_column: &str,
) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut writer = csv::Writer::from_writer(file);
    writer.write_record([date_column, value_column])?;
    for (date, value) in series.timestamps.iter().zip(&series.values) {
        writer.write_record([date.format("%Y-%m-%d").to_string(), value.to_string()])?;
    }
    writer.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DescriptiveStats {
    pub count: usize,
    pub mean: f64,
    /// Sample standard deviation (n - 1 denominator); 0 for a single point.
    pub std: f64,
    pub min: f64,
    /// Midpoint of the two central order statistics for even counts.
    pub median: f64,
    pub max: f64,
}

pub fn describe(series: &TimeSeries) -> DescriptiveStats {
    describe_values(series.values())
}

pub(crate) fn describe_values(values: &[f64]) -> DescriptiveStats {
    let n = values.len();
    let mean = values.iter().sum::<f64>() / n as f64;
    let std = if n > 1 {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
    } else {
        0.0
    };
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let median = if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    };
    DescriptiveStats {
        count: n,
        mean,
        std,
        min: sorted[0],
        median,
        max: sorted[n - 1],
    }
}

/// Additive decomposition `value = trend + seasonal + residual`.
///
/// `trend` and `residual` are `None` on the first and last `period / 2`
/// points, where the centered moving average is undefined.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Decomposition {
    pub period: usize,
    pub trend: Vec<Option<f64>>,
    pub seasonal: Vec<f64>,
    pub residual: Vec<Option<f64>>,
}

impl Decomposition {
    /// Per-phase seasonal indices (length `period`), zero mean.
    pub fn seasonal_profile(&self) -> &[f64] {
        &self.seasonal[..self.period.min(self.seasonal.len())]
    }

    /// Number of points where the trend is defined.
    pub fn defined_len(&self) -> usize {
        self.trend.iter().filter(|t| t.is_some()).count()
    }
}

/// Classical moving-average decomposition.
///
/// Odd periods use a plain centered average of `period` points; even periods
/// use the 2×`period` average, i.e. `period + 1` points with half weight at
/// both ends.
pub fn seasonal_decompose(series: &TimeSeries, period: usize) -> Result<Decomposition> {
    decompose_values(series.values(), period)
}

pub(crate) fn decompose_values(values: &[f64], period: usize) -> Result<Decomposition> {
    let n = values.len();
    if period == 0 {
        return Err(Error::InvalidArgument("period must be positive".into()));
    }
    if n < 2 * period {
        return Err(Error::InvalidArgument(format!(
            "series of length {n} is too short for period {period} (need at least {})",
            2 * period
        )));
    }

    let half = period / 2;
    let mut trend = vec![None; n];
    for t in half..n - half {
        let avg = if period % 2 == 1 {
            values[t - half..=t + half].iter().sum::<f64>() / period as f64
        } else {
            let inner: f64 = values[t - half + 1..t + half].iter().sum();
            (inner + 0.5 * (values[t - half] + values[t + half])) / period as f64
        };
        trend[t] = Some(avg);
    }

    let mut sums = vec![0.0; period];
    let mut counts = vec![0usize; period];
    for (t, tr) in trend.iter().enumerate() {
        if let Some(tr) = tr {
            sums[t % period] += values[t] - tr;
            counts[t % period] += 1;
        }
    }
    let mut profile: Vec<f64> = sums
        .iter()
        .zip(&counts)
        .map(|(s, &c)| if c > 0 { s / c as f64 } else { 0.0 })
        .collect();
    let centre = profile.iter().sum::<f64>() / period as f64;
    profile.iter_mut().for_each(|p| *p -= centre);

    let seasonal: Vec<f64> = (0..n).map(|t| profile[t % period]).collect();
    let residual = trend
        .iter()
        .enumerate()
        .map(|(t, tr)| tr.map(|tr| values[t] - tr - seasonal[t]))
        .collect();

    Ok(Decomposition {
        period,
        trend,
        seasonal,
        residual,
    })
}
