//! Optimization-free reference forecasters.

use crate::error::{Error, Result};
use crate::windowing::SequenceSet;

/// Predicts the last observation of each input window.
pub fn baseline_persistence(set: &SequenceSet) -> Vec<f64> {
    set.pairs
        .iter()
        .map(|p| *p.input.last().expect("window size >= 1"))
        .collect()
}

const RIDGE: f64 = 1e-8;

/// Least-squares AR(W) fit with intercept.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearAr {
    pub intercept: f64,
    pub coefficients: Vec<f64>,
}

impl LinearAr {
    /// Solves the centred normal equations; falls back to a ridge penalty of
    /// 1e-8 on the slope coefficients when they are singular.
    pub fn fit(train: &SequenceSet) -> Result<Self> {
        let w = train.config.window_size;
        if train.len() < w + 1 {
            return Err(Error::InvalidArgument(format!(
                "insufficient training pairs: {} for an AR({w}) fit with intercept",
                train.len()
            )));
        }
        let n = train.len() as f64;
        let mut x_mean = vec![0.0; w];
        let mut y_mean = 0.0;
        for p in train {
            for (m, x) in x_mean.iter_mut().zip(&p.input) {
                *m += x / n;
            }
            y_mean += p.target / n;
        }

        let mut gram = vec![0.0; w * w];
        let mut rhs = vec![0.0; w];
        let mut xc = vec![0.0; w];
        for p in train {
            for (c, (x, m)) in xc.iter_mut().zip(p.input.iter().zip(&x_mean)) {
                *c = x - m;
            }
            let yc = p.target - y_mean;
            for i in 0..w {
                rhs[i] += xc[i] * yc;
                for j in 0..w {
                    gram[i * w + j] += xc[i] * xc[j];
                }
            }
        }

        let coefficients = match cholesky_solve(&gram, &rhs, w) {
            Some(beta) => beta,
            None => {
                let mut ridged = gram.clone();
                for i in 0..w {
                    ridged[i * w + i] += RIDGE;
                }
                cholesky_solve(&ridged, &rhs, w).ok_or_else(|| {
                    Error::Numerical("normal equations rank-deficient even with ridge".into())
                })?
            }
        };
        let intercept = y_mean - coefficients.iter().zip(&x_mean).map(|(b, m)| b * m).sum::<f64>();
        Ok(Self {
            intercept,
            coefficients,
        })
    }

    pub fn predict(&self, set: &SequenceSet) -> Vec<f64> {
        set.pairs
            .iter()
            .map(|p| {
                self.intercept
                    + self
                        .coefficients
                        .iter()
                        .zip(&p.input)
                        .map(|(b, x)| b * x)
                        .sum::<f64>()
            })
            .collect()
    }
}

pub fn baseline_linear_ar(train: &SequenceSet, eval: &SequenceSet) -> Result<Vec<f64>> {
    Ok(LinearAr::fit(train)?.predict(eval))
}

/// Solves `a x = b` for symmetric positive-definite `a` (n×n, row-major).
/// Returns `None` when a pivot is not safely positive.
fn cholesky_solve(a: &[f64], b: &[f64], n: usize) -> Option<Vec<f64>> {
    let max_diag = (0..n).map(|i| a[i * n + i]).fold(0.0f64, f64::max);
    let tol = 1e-12 * max_diag.max(f64::MIN_POSITIVE);
    let mut l = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let s: f64 = (0..j).map(|k| l[i * n + k] * l[j * n + k]).sum();
            if i == j {
                let d = a[i * n + i] - s;
                if !(d > tol) {
                    return None;
                }
                l[i * n + i] = d.sqrt();
            } else {
                l[i * n + j] = (a[i * n + j] - s) / l[j * n + j];
            }
        }
    }
    let mut y = vec![0.0; n];
    for i in 0..n {
        let s: f64 = (0..i).map(|k| l[i * n + k] * y[k]).sum();
        y[i] = (b[i] - s) / l[i * n + i];
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let s: f64 = (i + 1..n).map(|k| l[k * n + i] * x[k]).sum();
        x[i] = (y[i] - s) / l[i * n + i];
    }
    Some(x)
}
