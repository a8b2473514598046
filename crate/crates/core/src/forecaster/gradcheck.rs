//! Finite-difference verification of the LSTM backward pass.

use super::lstm::{GradientFault, LstmModel, Tape};
use crate::error::{Error, Result};
use crate::windowing::SequencePair;

const MAX_HIDDEN: usize = 8;
const MAX_WINDOW: usize = 6;

/// Largest relative error between the analytic gradient of the batch MSE and
/// central differences, over every parameter. The denominator is
/// `max(|analytic|, |numeric|, 1e-8)`.
pub fn gradient_check(model: &LstmModel, batch: &[SequencePair], epsilon: f64) -> Result<f64> {
    gradient_check_with_fault(model, batch, epsilon, GradientFault::None)
}

/// Same as [`gradient_check`] with a deliberately corrupted backward pass.
pub fn gradient_check_with_fault(
    model: &LstmModel,
    batch: &[SequencePair],
    epsilon: f64,
    fault: GradientFault,
) -> Result<f64> {
    if model.hidden_size() > MAX_HIDDEN {
        return Err(Error::InvalidArgument(format!(
            "gradient check supports hidden size <= {MAX_HIDDEN}"
        )));
    }
    if batch.is_empty() || batch.iter().any(|p| p.input.len() > MAX_WINDOW) {
        return Err(Error::InvalidArgument(format!(
            "gradient check needs a non-empty batch with windows <= {MAX_WINDOW}"
        )));
    }
    if !(epsilon > 0.0) {
        return Err(Error::InvalidArgument("epsilon must be positive".into()));
    }

    let inputs: Vec<&[f64]> = batch.iter().map(|p| p.input.as_slice()).collect();
    let targets: Vec<f64> = batch.iter().map(|p| p.target).collect();
    let mut tape = Tape::default();
    let mut analytic = vec![0.0; model.params().len()];
    model.loss_and_grad(&inputs, &targets, &mut tape, &mut analytic, fault)?;

    let loss_at = |m: &LstmModel, tape: &mut Tape| -> Result<f64> {
        let out = m.forward_batch(&inputs, tape)?;
        Ok(out
            .iter()
            .zip(&targets)
            .map(|(y, t)| (y - t).powi(2))
            .sum::<f64>()
            / targets.len() as f64)
    };

    let mut probe = model.clone();
    let mut worst = 0.0f64;
    for (i, &a) in analytic.iter().enumerate() {
        let original = probe.params()[i];
        probe.params_mut()[i] = original + epsilon;
        let plus = loss_at(&probe, &mut tape)?;
        probe.params_mut()[i] = original - epsilon;
        let minus = loss_at(&probe, &mut tape)?;
        probe.params_mut()[i] = original;

        let numeric = (plus - minus) / (2.0 * epsilon);
        let denom = a.abs().max(numeric.abs()).max(1e-8);
        worst = worst.max((a - numeric).abs() / denom);
    }
    Ok(worst)
}
