//! Affine value scaling fitted on training data only.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::windowing::SequenceSet;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScalingKind {
    None,
    MinMax,
    #[default]
    ZScore,
}

impl fmt::Display for ScalingKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ScalingKind::None => "none",
            ScalingKind::MinMax => "min_max",
            ScalingKind::ZScore => "z_score",
        })
    }
}

impl FromStr for ScalingKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        match s {
            "none" => Ok(ScalingKind::None),
            "min_max" | "minmax" => Ok(ScalingKind::MinMax),
            "z_score" | "zscore" => Ok(ScalingKind::ZScore),
            _ => Err(Error::InvalidArgument(format!("unknown scaling '{s}'"))),
        }
    }
}

/// `x ↦ (x - shift) / scale`.
///
/// The only constructor fits on a training [`SequenceSet`], and the fitted
/// parameters cannot be changed afterwards.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scaler {
    kind: ScalingKind,
    shift: f64,
    scale: f64,
}

impl Scaler {
    /// Fits on the distinct raw observations touched by the training pairs.
    /// A degenerate spread (constant data) falls back to unit scale.
    pub fn fit(kind: ScalingKind, train: &SequenceSet) -> Self {
        let mut observed = BTreeMap::new();
        for p in train {
            for (k, x) in p.input.iter().enumerate() {
                observed.insert(p.input_start + k, *x);
            }
            observed.insert(p.target_index, p.target);
        }
        let values: Vec<f64> = observed.into_values().collect();
        Self::fit_values(kind, &values)
    }

    pub(crate) fn fit_values(kind: ScalingKind, values: &[f64]) -> Self {
        let (shift, scale) = match kind {
            _ if values.is_empty() => (0.0, 1.0),
            ScalingKind::None => (0.0, 1.0),
            ScalingKind::MinMax => {
                let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
                let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                (lo, hi - lo)
            }
            ScalingKind::ZScore => {
                let n = values.len() as f64;
                let mean = values.iter().sum::<f64>() / n;
                let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
                (mean, var.sqrt())
            }
        };
        let scale = if scale > f64::EPSILON * shift.abs().max(1.0) {
            scale
        } else {
            1.0
        };
        Self { kind, shift, scale }
    }

    pub fn kind(&self) -> ScalingKind {
        self.kind
    }

    pub fn shift(&self) -> f64 {
        self.shift
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn transform(&self, x: f64) -> f64 {
        (x - self.shift) / self.scale
    }

    pub fn inverse_transform(&self, y: f64) -> f64 {
        y * self.scale + self.shift
    }
}
