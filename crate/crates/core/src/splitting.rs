//! Train/validation/test partitioning in leaky and clean mode.
//!
//! * **Leaky** windows the whole series first and then partitions the pair
//!   list, so neighbouring train and test pairs share raw observations.
//! * **Clean** partitions the raw series into contiguous segments first and
//!   windows each segment on its own; no window crosses a partition boundary.

use std::fmt;
use std::ops::Range;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::series::TimeSeries;
use crate::windowing::{make_sequences, SequenceSet, WindowConfig};

const FRACTION_TOL: f64 = 1e-9;

/// Validation technique.
///
/// Parsed from and printed as `two_way[:train/test]`,
/// `three_way[:train/val/test]` or `k_fold[:k]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SplitPlan {
    TwoWay { train: f64, test: f64 },
    ThreeWay { train: f64, val: f64, test: f64 },
    KFold { k: usize },
}

impl SplitPlan {
    pub const fn two_way() -> Self {
        SplitPlan::TwoWay {
            train: 0.8,
            test: 0.2,
        }
    }

    pub const fn three_way() -> Self {
        SplitPlan::ThreeWay {
            train: 0.7,
            val: 0.1,
            test: 0.2,
        }
    }

    pub const fn k_fold(k: usize) -> Self {
        SplitPlan::KFold { k }
    }

    pub fn validate(&self) -> Result<()> {
        let check = |fractions: &[f64]| {
            if fractions.iter().any(|f| !(*f > 0.0)) {
                return Err(Error::InvalidArgument(format!(
                    "split fractions must be positive: {fractions:?}"
                )));
            }
            let sum: f64 = fractions.iter().sum();
            if (sum - 1.0).abs() > FRACTION_TOL {
                return Err(Error::InvalidArgument(format!(
                    "split fractions must sum to 1 (got {sum})"
                )));
            }
            Ok(())
        };
        match *self {
            SplitPlan::TwoWay { train, test } => check(&[train, test]),
            SplitPlan::ThreeWay { train, val, test } => check(&[train, val, test]),
            SplitPlan::KFold { k } if k < 2 => Err(Error::InvalidArgument(format!(
                "k-fold needs k >= 2 (got {k})"
            ))),
            SplitPlan::KFold { .. } => Ok(()),
        }
    }

    /// Short label for reports: `2-way`, `3-way`, `10-fold`.
    pub fn label(&self) -> String {
        match self {
            SplitPlan::TwoWay { .. } => "2-way".into(),
            SplitPlan::ThreeWay { .. } => "3-way".into(),
            SplitPlan::KFold { k } => format!("{k}-fold"),
        }
    }

    /// Position in the 2-way, 3-way, k-fold ordering used for tie-breaks.
    pub fn ordinal(&self) -> usize {
        match self {
            SplitPlan::TwoWay { .. } => 0,
            SplitPlan::ThreeWay { .. } => 1,
            SplitPlan::KFold { .. } => 2,
        }
    }

    pub fn has_validation(&self) -> bool {
        matches!(self, SplitPlan::ThreeWay { .. })
    }
}

impl fmt::Display for SplitPlan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SplitPlan::TwoWay { train, test } => write!(f, "two_way:{train}/{test}"),
            SplitPlan::ThreeWay { train, val, test } => {
                write!(f, "three_way:{train}/{val}/{test}")
            }
            SplitPlan::KFold { k } => write!(f, "k_fold:{k}"),
        }
    }
}

impl FromStr for SplitPlan {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (kind, args) = match s.split_once(':') {
            Some((kind, args)) => (kind.trim(), Some(args.trim())),
            None => (s.trim(), None),
        };
        let fractions = |args: &str| -> Result<Vec<f64>> {
            args.split('/')
                .map(|x| {
                    x.trim()
                        .parse::<f64>()
                        .map_err(|_| Error::InvalidArgument(format!("bad fraction '{x}' in '{s}'")))
                })
                .collect()
        };
        let plan = match (kind, args) {
            ("two_way", None) => SplitPlan::two_way(),
            ("three_way", None) => SplitPlan::three_way(),
            ("k_fold", None) => SplitPlan::k_fold(10),
            ("two_way", Some(a)) => match fractions(a)?[..] {
                [train, test] => SplitPlan::TwoWay { train, test },
                _ => return Err(Error::InvalidArgument(format!("two_way takes 2 fractions: '{s}'"))),
            },
            ("three_way", Some(a)) => match fractions(a)?[..] {
                [train, val, test] => SplitPlan::ThreeWay { train, val, test },
                _ => {
                    return Err(Error::InvalidArgument(format!(
                        "three_way takes 3 fractions: '{s}'"
                    )))
                }
            },
            ("k_fold", Some(a)) => SplitPlan::KFold {
                k: a.parse()
                    .map_err(|_| Error::InvalidArgument(format!("bad fold count in '{s}'")))?,
            },
            _ => return Err(Error::InvalidArgument(format!("unknown split plan '{s}'"))),
        };
        plan.validate()?;
        Ok(plan)
    }
}

impl Serialize for SplitPlan {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for SplitPlan {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Leaky,
    Clean,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Leaky => "leaky",
            Mode::Clean => "clean",
        })
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "leaky" => Ok(Mode::Leaky),
            "clean" => Ok(Mode::Clean),
            _ => Err(Error::InvalidArgument(format!("unknown mode '{s}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Order {
    #[default]
    Sequential,
    Random,
}

impl fmt::Display for Order {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Order::Sequential => "sequential",
            Order::Random => "random",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub plan: SplitPlan,
    pub mode: Mode,
    #[serde(default)]
    pub order: Order,
    pub window: WindowConfig,
    #[serde(default)]
    pub seed: Option<u64>,
}

impl SplitSpec {
    pub fn validate(&self) -> Result<()> {
        self.plan.validate()?;
        self.window.validate()?;
        if self.mode == Mode::Clean && self.order == Order::Random {
            return Err(Error::InvalidArgument(
                "clean mode requires sequential order: shuffling raw points breaks window contiguity"
                    .into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitResult {
    pub train: SequenceSet,
    pub val: Option<SequenceSet>,
    pub test: SequenceSet,
    /// Fold number for k-fold plans, 0 otherwise.
    pub fold_index: usize,
}

impl SplitResult {
    /// Train and validation pairs, i.e. everything the model may see.
    pub fn fitting_sets(&self) -> impl Iterator<Item = &SequenceSet> {
        std::iter::once(&self.train).chain(self.val.as_ref())
    }
}

/// Materializes the partitions described by `spec`.
///
/// Returns one result for 2-way and 3-way plans and `k` results for k-fold.
pub fn split(series: &TimeSeries, spec: &SplitSpec) -> Result<Vec<SplitResult>> {
    split_values(series.values(), spec)
}

pub fn split_values(values: &[f64], spec: &SplitSpec) -> Result<Vec<SplitResult>> {
    spec.validate()?;
    match spec.mode {
        Mode::Leaky => split_leaky(values, spec),
        Mode::Clean => split_clean(values, spec),
    }
}

/// Floors every share except the last, which takes the remainder.
pub(crate) fn partition_sizes(n: usize, fractions: &[f64]) -> Vec<usize> {
    let mut sizes: Vec<usize> = fractions[..fractions.len() - 1]
        .iter()
        .map(|f| (f * n as f64 + FRACTION_TOL).floor() as usize)
        .collect();
    let used: usize = sizes.iter().sum();
    sizes.push(n.saturating_sub(used));
    sizes
}

/// Near-equal contiguous blocks; the first `n % k` blocks get one extra element.
pub(crate) fn block_ranges(n: usize, k: usize) -> Vec<Range<usize>> {
    let base = n / k;
    let extra = n % k;
    let mut start = 0;
    (0..k)
        .map(|i| {
            let len = base + usize::from(i < extra);
            let r = start..start + len;
            start += len;
            r
        })
        .collect()
}

fn plan_fractions(plan: &SplitPlan) -> Vec<f64> {
    match *plan {
        SplitPlan::TwoWay { train, test } => vec![train, test],
        SplitPlan::ThreeWay { train, val, test } => vec![train, val, test],
        SplitPlan::KFold { .. } => unreachable!("k-fold has no fractions"),
    }
}

const PARTITION_NAMES: [&str; 3] = ["train", "val", "test"];

fn partition_name(count: usize, i: usize) -> &'static str {
    if count == 2 && i == 1 {
        "test"
    } else {
        PARTITION_NAMES[i]
    }
}

fn require_non_empty(set: &SequenceSet, name: &str, raw_len: usize) -> Result<()> {
    if set.is_empty() {
        return Err(Error::EmptyPartition {
            partition: name.to_string(),
            raw_len,
        });
    }
    Ok(())
}

fn shuffled_positions(n: usize, order: Order, seed: Option<u64>) -> Vec<usize> {
    let mut positions: Vec<usize> = (0..n).collect();
    if order == Order::Random {
        let mut rng = match seed {
            Some(s) => ChaCha8Rng::seed_from_u64(s),
            None => ChaCha8Rng::from_os_rng(),
        };
        positions.shuffle(&mut rng);
    }
    positions
}

fn split_leaky(values: &[f64], spec: &SplitSpec) -> Result<Vec<SplitResult>> {
    let all = make_sequences(values, 0, spec.window);
    let n_pairs = all.len();
    let positions = shuffled_positions(n_pairs, spec.order, spec.seed);

    match spec.plan {
        SplitPlan::KFold { k } => {
            if k > n_pairs {
                return Err(Error::InvalidArgument(format!(
                    "{k} folds requested but only {n_pairs} sequence pairs available"
                )));
            }
            block_ranges(n_pairs, k)
                .into_iter()
                .enumerate()
                .map(|(fold, block)| {
                    let test_pos = &positions[block.clone()];
                    let train_pos: Vec<usize> = positions[..block.start]
                        .iter()
                        .chain(&positions[block.end..])
                        .copied()
                        .collect();
                    let test = all.select(test_pos);
                    let train = all.select(&train_pos);
                    require_non_empty(&test, "test", block.len())?;
                    require_non_empty(&train, "train", n_pairs - block.len())?;
                    Ok(SplitResult {
                        train,
                        val: None,
                        test,
                        fold_index: fold,
                    })
                })
                .collect()
        }
        plan => {
            let sizes = partition_sizes(n_pairs, &plan_fractions(&plan));
            let mut sets = Vec::with_capacity(sizes.len());
            let mut start = 0;
            for (i, &len) in sizes.iter().enumerate() {
                let set = all.select(&positions[start..start + len]);
                require_non_empty(&set, partition_name(sizes.len(), i), len)?;
                sets.push(set);
                start += len;
            }
            Ok(vec![assemble(sets, 0)])
        }
    }
}

fn split_clean(values: &[f64], spec: &SplitSpec) -> Result<Vec<SplitResult>> {
    let n = values.len();
    let window = spec.window;
    match spec.plan {
        SplitPlan::KFold { k } => {
            if k > n {
                return Err(Error::InvalidArgument(format!(
                    "{k} folds requested but the series has only {n} points"
                )));
            }
            block_ranges(n, k)
                .into_iter()
                .enumerate()
                .map(|(fold, block)| {
                    let test = make_sequences(&values[block.clone()], block.start, window);
                    require_non_empty(&test, &format!("test (fold {fold})"), block.len())?;

                    let mut train = SequenceSet::empty(window);
                    for run in [0..block.start, block.end..n] {
                        if !run.is_empty() {
                            train.extend(make_sequences(&values[run.clone()], run.start, window));
                        }
                    }
                    require_non_empty(&train, &format!("train (fold {fold})"), n - block.len())?;
                    Ok(SplitResult {
                        train,
                        val: None,
                        test,
                        fold_index: fold,
                    })
                })
                .collect()
        }
        plan => {
            let sizes = partition_sizes(n, &plan_fractions(&plan));
            let mut sets = Vec::with_capacity(sizes.len());
            let mut start = 0;
            for (i, &len) in sizes.iter().enumerate() {
                let set = make_sequences(&values[start..start + len], start, window);
                require_non_empty(&set, partition_name(sizes.len(), i), len)?;
                sets.push(set);
                start += len;
            }
            Ok(vec![assemble(sets, 0)])
        }
    }
}

fn assemble(mut sets: Vec<SequenceSet>, fold_index: usize) -> SplitResult {
    let test = sets.pop().expect("at least two partitions");
    let val = if sets.len() == 2 { sets.pop() } else { None };
    let train = sets.pop().expect("train partition");
    SplitResult {
        train,
        val,
        test,
        fold_index,
    }
}

fn describe_set(set: &SequenceSet) -> String {
    let ranges: Vec<String> = set
        .source_ranges
        .iter()
        .map(|r| format!("[{}, {})", r.start, r.end))
        .collect();
    let span = match (set.pairs.first(), set.pairs.iter().map(|p| p.target_index).max()) {
        (Some(first), Some(last)) => format!("footprint [{}, {}]", first.input_start, last),
        _ => "footprint empty".into(),
    };
    format!(
        "{} pairs, raw {} points {}, {}",
        set.len(),
        set.source_len(),
        ranges.join(" + "),
        span
    )
}

/// Human-readable partition sizes and raw ranges.
pub fn describe_split(result: &SplitResult) -> String {
    let mut out = format!("fold {}\n", result.fold_index);
    out.push_str(&format!("  train: {}\n", describe_set(&result.train)));
    match &result.val {
        Some(val) => out.push_str(&format!("  val:   {}\n", describe_set(val))),
        None => out.push_str("  val:   none\n"),
    }
    out.push_str(&format!("  test:  {}\n", describe_set(&result.test)));
    out
}
