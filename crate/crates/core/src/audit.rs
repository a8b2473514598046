//! Raw-index contamination audit and buffer-zone mitigation.
//!
//! A split is contaminated when some raw observation appears in the footprint
//! of a pair the model is fitted on (train or validation) and in the footprint
//! of a test pair. Footprints include the target index.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::splitting::SplitResult;
use crate::windowing::{SequencePair, SequenceSet};

const OVERLAP_SAMPLE_LEN: usize = 20;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuditReport {
    pub train_footprint_size: usize,
    pub test_footprint_size: usize,
    pub overlap_count: usize,
    /// Smallest overlapping raw indices, at most 20.
    pub overlap_sample: Vec<usize>,
    pub is_contaminated: bool,
    /// Test pairs whose footprint meets the train footprint.
    pub contaminated_test_pairs: usize,
}

struct Footprint {
    marked: Vec<bool>,
    size: usize,
}

impl Footprint {
    fn of<'a>(sets: impl IntoIterator<Item = &'a SequenceSet>, len: usize) -> Self {
        let mut marked = vec![false; len];
        let mut size = 0;
        for pair in sets.into_iter().flat_map(|s| s.pairs.iter()) {
            for i in pair_indices(pair) {
                if !marked[i] {
                    marked[i] = true;
                    size += 1;
                }
            }
        }
        Self { marked, size }
    }

    fn contains(&self, i: usize) -> bool {
        self.marked.get(i).copied().unwrap_or(false)
    }
}

fn pair_indices(pair: &SequencePair) -> impl Iterator<Item = usize> {
    (pair.input_start..pair.input_start + pair.input.len()).chain(std::iter::once(pair.target_index))
}

fn index_bound(result: &SplitResult) -> usize {
    result
        .fitting_sets()
        .chain([&result.test])
        .flat_map(|s| s.pairs.iter().map(|p| p.target_index + 1))
        .max()
        .unwrap_or(0)
}

pub fn audit(result: &SplitResult) -> AuditReport {
    let len = index_bound(result);
    let train = Footprint::of(result.fitting_sets(), len);
    let test = Footprint::of([&result.test], len);

    let overlap: Vec<usize> = (0..len)
        .filter(|&i| train.contains(i) && test.contains(i))
        .collect();
    let contaminated_test_pairs = result
        .test
        .pairs
        .iter()
        .filter(|p| pair_indices(p).any(|i| train.contains(i)))
        .count();

    AuditReport {
        train_footprint_size: train.size,
        test_footprint_size: test.size,
        overlap_count: overlap.len(),
        overlap_sample: overlap.iter().take(OVERLAP_SAMPLE_LEN).copied().collect(),
        is_contaminated: !overlap.is_empty(),
        contaminated_test_pairs,
    }
}

/// Minimum and maximum raw index touched by the test set.
fn test_bounds(result: &SplitResult) -> Option<(usize, usize)> {
    let lo = result.test.pairs.iter().map(|p| p.input_start).min()?;
    let hi = result.test.pairs.iter().map(|p| p.target_index).max()?;
    Some((lo, hi))
}

/// Whether a fitting pair survives a buffer of `gap` raw indices around the
/// test interval `[lo, hi]`.
///
/// Pairs whose footprint range intersects the interval are always dropped.
/// Disjoint pairs are kept when at least `gap` untouched indices separate
/// them from the interval.
fn survives(pair: &SequencePair, (lo, hi): (usize, usize), gap: usize) -> bool {
    let (a, b) = pair.footprint_bounds();
    if b < lo {
        lo - b > gap
    } else if a > hi {
        a - hi > gap
    } else {
        false
    }
}

fn buffered(set: &SequenceSet, bounds: (usize, usize), gap: usize) -> SequenceSet {
    SequenceSet {
        pairs: set
            .pairs
            .iter()
            .filter(|p| survives(p, bounds, gap))
            .cloned()
            .collect(),
        source_ranges: set.source_ranges.clone(),
        config: set.config,
    }
}

/// Drops training (and validation) pairs that come within `gap` raw indices
/// of the test footprint's `[min, max]` interval. The test set is unchanged.
///
/// `gap = 0` removes only pairs whose range intersects the test interval, so
/// splits whose fitting data already sits outside it are returned as-is.
pub fn apply_buffer(result: &SplitResult, gap: usize) -> Result<SplitResult> {
    let Some(bounds) = test_bounds(result) else {
        return Ok(result.clone());
    };
    let train = buffered(&result.train, bounds, gap);
    if train.is_empty() {
        return Err(Error::EmptyPartition {
            partition: "train".into(),
            raw_len: 0,
        });
    }
    let val = match &result.val {
        Some(v) => {
            let v = buffered(v, bounds, gap);
            if v.is_empty() {
                return Err(Error::EmptyPartition {
                    partition: "val".into(),
                    raw_len: 0,
                });
            }
            Some(v)
        }
        None => None,
    };
    Ok(SplitResult {
        train,
        val,
        test: result.test.clone(),
        fold_index: result.fold_index,
    })
}

/// Smallest buffer that leaves the split uncontaminated, found by a linear
/// scan from 0. Fails once buffering exhausts the training data.
pub fn minimal_clearing_gap(result: &SplitResult) -> Result<usize> {
    if !audit(result).is_contaminated {
        return Ok(0);
    }
    let limit = index_bound(result);
    for gap in 0..=limit {
        match apply_buffer(result, gap) {
            Ok(r) if !audit(&r).is_contaminated => return Ok(gap),
            Ok(_) => continue,
            Err(Error::EmptyPartition { partition, .. }) => {
                return Err(Error::Data(format!(
                    "no buffer clears contamination: {partition} set exhausted at gap {gap}"
                )))
            }
            Err(e) => return Err(e),
        }
    }
    Err(Error::Data("no buffer clears contamination".into()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::splitting::{split_values, Mode, Order, SplitPlan, SplitSpec};
    use crate::windowing::{footprint, WindowConfig};
    use std::collections::BTreeSet;

    fn spec(plan: SplitPlan, mode: Mode, w: usize, l: usize) -> SplitSpec {
        SplitSpec {
            plan,
            mode,
            order: Order::Sequential,
            window: WindowConfig::new(w, l).unwrap(),
            seed: None,
        }
    }

    fn ramp(n: usize) -> Vec<f64> {
        (0..n).map(|i| i as f64).collect()
    }

    // Naive oracle: materialize index sets per pair and intersect.
    fn naive_overlap(result: &SplitResult) -> BTreeSet<usize> {
        let mut train = BTreeSet::new();
        for set in result.fitting_sets() {
            for p in &set.pairs {
                train.extend(footprint(p));
            }
        }
        let mut test = BTreeSet::new();
        for p in &result.test.pairs {
            test.extend(footprint(p));
        }
        train.intersection(&test).copied().collect()
    }

    fn small_leaky() -> SplitResult {
        split_values(&ramp(10), &spec(SplitPlan::two_way(), Mode::Leaky, 3, 1))
            .unwrap()
            .remove(0)
    }

    #[test]
    fn small_leaky_overlap() {
        let r = small_leaky();
        let report = audit(&r);
        assert_eq!(report.overlap_count, 3);
        assert_eq!(report.overlap_sample, vec![5, 6, 7]);
        assert!(report.is_contaminated);
        assert_eq!(report.train_footprint_size, 8);
        assert_eq!(report.test_footprint_size, 5);
        // both test pairs share indices with the train footprint
        assert_eq!(report.contaminated_test_pairs, 2);
    }

    #[test]
    fn leaky_ten_fold_first_fold_matches_oracle() {
        let r = split_values(&ramp(50), &spec(SplitPlan::k_fold(10), Mode::Leaky, 5, 1)).unwrap();
        let oracle = naive_overlap(&r[0]);
        // fold 0 tests pairs t = 0..=4, footprint {0..9}; train pairs t >= 5 cover {5..9}
        assert_eq!(oracle, (5..10).collect());
        assert_eq!(audit(&r[0]).overlap_count, 5);
    }

    #[test]
    fn exhaustive_small_instances_match_oracle() {
        let plans = [SplitPlan::two_way(), SplitPlan::three_way(), SplitPlan::k_fold(3), SplitPlan::k_fold(10)];
        for n in 2..=64 {
            for w in 1..=6 {
                for l in 1..=3 {
                    for plan in plans {
                        for mode in [Mode::Leaky, Mode::Clean] {
                            let Ok(results) = split_values(&ramp(n), &spec(plan, mode, w, l)) else {
                                continue;
                            };
                            for r in &results {
                                let oracle = naive_overlap(r);
                                let report = audit(r);
                                assert_eq!(report.overlap_count, oracle.len(), "n={n} w={w} l={l} {plan} {mode}");
                                assert!(report.overlap_sample.iter().all(|i| oracle.contains(i)));
                                assert_eq!(report.is_contaminated, !oracle.is_empty());
                                assert!(report.overlap_count <= report.train_footprint_size.min(report.test_footprint_size));
                            }
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn zero_gap_is_identity_on_clean() {
        let r = split_values(&ramp(200), &spec(SplitPlan::k_fold(5), Mode::Clean, 7, 2)).unwrap();
        for fold in &r {
            assert_eq!(&apply_buffer(fold, 0).unwrap(), fold);
            assert_eq!(minimal_clearing_gap(fold).unwrap(), 0);
        }
    }

    #[test]
    fn small_leaky_buffering() {
        let r = small_leaky();
        // gap 0 purges the three train pairs whose range meets [5, 9]
        let purged = apply_buffer(&r, 0).unwrap();
        assert_eq!(purged.train.len(), 2);
        assert!(!audit(&purged).is_contaminated);
        assert_eq!(minimal_clearing_gap(&r).unwrap(), 0);
        // W + L = 4 exhausts this tiny train set
        assert!(matches!(apply_buffer(&r, 4), Err(Error::EmptyPartition { .. })));
        assert!(apply_buffer(&r, 100).is_err());
    }

    #[test]
    fn window_plus_lag_buffer_clears_longer_series() {
        for w in 2..=12 {
            for l in 1..=3 {
                let r = split_values(&ramp(120), &spec(SplitPlan::two_way(), Mode::Leaky, w, l))
                    .unwrap()
                    .remove(0);
                assert!(audit(&r).is_contaminated);
                let g = minimal_clearing_gap(&r).unwrap();
                assert!(g <= w + l);
                assert!(!audit(&apply_buffer(&r, w + l).unwrap()).is_contaminated);
            }
        }
    }

    #[test]
    fn overlap_monotone_in_gap() {
        let r = split_values(&ramp(300), &spec(SplitPlan::k_fold(10), Mode::Leaky, 10, 3)).unwrap();
        for fold in &r {
            let mut prev = usize::MAX;
            for gap in 0..20 {
                let count = match apply_buffer(fold, gap) {
                    Ok(b) => audit(&b).overlap_count,
                    Err(_) => break,
                };
                assert!(count <= prev);
                prev = count;
            }
        }
    }

    #[test]
    fn random_leaky_cannot_be_buffered() {
        let mut s = spec(SplitPlan::two_way(), Mode::Leaky, 5, 1);
        s.order = Order::Random;
        s.seed = Some(3);
        let r = split_values(&ramp(100), &s).unwrap().remove(0);
        assert!(audit(&r).is_contaminated);
        assert!(minimal_clearing_gap(&r).is_err());
    }

    #[test]
    fn report_serializes() {
        let json = serde_json::to_string(&audit(&small_leaky())).unwrap();
        let back: AuditReport = serde_json::from_str(&json).unwrap();
        assert_eq!(back, audit(&small_leaky()));
    }
}
