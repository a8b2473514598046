//! Sliding-window construction of supervised (input, target) pairs.
//!
//! Every pair remembers the raw indices it was cut from so partitions can be
//! audited for shared observations after the fact.

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Window size and forecast horizon.
///
/// A pair starting at raw index `t` uses `x[t..t + window_size]` as input and
/// `x[t + window_size + lag_step - 1]` as target, so `lag_step = 1` predicts
/// the observation immediately after the window.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct WindowConfig {
    pub window_size: usize,
    pub lag_step: usize,
}

impl WindowConfig {
    pub fn new(window_size: usize, lag_step: usize) -> Result<Self> {
        let cfg = Self {
            window_size,
            lag_step,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.window_size == 0 || self.lag_step == 0 {
            return Err(Error::InvalidArgument(format!(
                "window size and lag step must be >= 1 (got W={}, L={})",
                self.window_size, self.lag_step
            )));
        }
        Ok(())
    }

    /// Raw points spanned by one pair, input through target.
    pub fn span(&self) -> usize {
        self.window_size + self.lag_step
    }

    /// Number of pairs a contiguous segment of `len` points yields.
    pub fn pair_count(&self, len: usize) -> usize {
        (len + 1).saturating_sub(self.span())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequencePair {
    pub input: Vec<f64>,
    pub target: f64,
    pub input_start: usize,
    pub target_index: usize,
}

impl SequencePair {
    pub fn window_size(&self) -> usize {
        self.input.len()
    }

    /// Inclusive raw index of the last input observation.
    pub fn input_end(&self) -> usize {
        self.input_start + self.input.len() - 1
    }

    /// Smallest and largest raw index touched by the pair.
    pub fn footprint_bounds(&self) -> (usize, usize) {
        (self.input_start, self.target_index)
    }
}

/// Raw indices touched by a pair: its input window plus the target index.
///
/// Returned sorted and without duplicates; the cardinality is `W + 1`.
pub fn footprint(pair: &SequencePair) -> Vec<usize> {
    let mut idx: Vec<usize> = (pair.input_start..pair.input_start + pair.input.len()).collect();
    idx.push(pair.target_index);
    idx
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequenceSet {
    pub pairs: Vec<SequencePair>,
    /// Raw-index intervals the pairs were generated from.
    pub source_ranges: Vec<Range<usize>>,
    pub config: WindowConfig,
}

impl SequenceSet {
    pub fn empty(config: WindowConfig) -> Self {
        Self {
            pairs: Vec::new(),
            source_ranges: Vec::new(),
            config,
        }
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn targets(&self) -> Vec<f64> {
        self.pairs.iter().map(|p| p.target).collect()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, SequencePair> {
        self.pairs.iter()
    }

    /// Total number of raw points covered by the source ranges.
    pub fn source_len(&self) -> usize {
        self.source_ranges.iter().map(|r| r.len()).sum()
    }

    /// Appends another set built with the same window configuration.
    pub fn extend(&mut self, other: SequenceSet) {
        debug_assert_eq!(self.config, other.config);
        self.pairs.extend(other.pairs);
        self.source_ranges.extend(other.source_ranges);
        self.pairs.sort_by_key(|p| p.input_start);
    }

    /// Subset of pairs selected by position, kept in `input_start` order.
    pub(crate) fn select(&self, positions: &[usize]) -> SequenceSet {
        let mut pairs: Vec<SequencePair> = positions.iter().map(|&i| self.pairs[i].clone()).collect();
        pairs.sort_by_key(|p| p.input_start);
        SequenceSet {
            pairs,
            source_ranges: self.source_ranges.clone(),
            config: self.config,
        }
    }
}

impl<'a> IntoIterator for &'a SequenceSet {
    type Item = &'a SequencePair;
    type IntoIter = std::slice::Iter<'a, SequencePair>;

    fn into_iter(self) -> Self::IntoIter {
        self.pairs.iter()
    }
}

/// Slides a window over `segment` with stride 1.
///
/// `offset` is the raw index of `segment[0]` in the originating series. A
/// segment of `N` points yields `max(0, N - W - L + 1)` pairs; an empty set is
/// a legal result.
pub fn make_sequences(segment: &[f64], offset: usize, config: WindowConfig) -> SequenceSet {
    let w = config.window_size;
    let count = config.pair_count(segment.len());
    let pairs = (0..count)
        .map(|k| {
            let target_local = k + w + config.lag_step - 1;
            SequencePair {
                input: segment[k..k + w].to_vec(),
                target: segment[target_local],
                input_start: offset + k,
                target_index: offset + target_local,
            }
        })
        .collect();
    SequenceSet {
        pairs,
        source_ranges: std::iter::once(offset..offset + segment.len()).collect(),
        config,
    }
}
