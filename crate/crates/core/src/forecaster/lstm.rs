//! Single-layer LSTM regressor with a dense scalar head.
//!
//! Gate recurrence per step, with `[x_t; h_{t-1}]` the concatenated input:
//!
//! ```text
//! i = σ(W_i [x; h] + b_i)    f = σ(W_f [x; h] + b_f)
//! g = tanh(W_g [x; h] + b_g) o = σ(W_o [x; h] + b_o)
//! c_t = f ⊙ c_{t-1} + i ⊙ g
//! h_t = o ⊙ tanh(c_t)
//! ŷ   = v · h_T + c
//! ```
//!
//! All parameters live in one flat vector so the optimizer and the gradient
//! checker can treat them uniformly. Layout: gate weights (`4H × (1+H)`,
//! row-major, gate blocks in i, f, g, o order), gate biases (`4H`), head
//! weights (`H`), head bias (`1`).

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const GATES: usize = 4;

/// Gate block indices within the stacked `4H` rows.
pub(crate) const INPUT_GATE: usize = 0;
pub(crate) const FORGET_GATE: usize = 1;
pub(crate) const CELL_GATE: usize = 2;
pub(crate) const OUTPUT_GATE: usize = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LstmModel {
    hidden_size: usize,
    params: Vec<f64>,
}

/// Deliberate corruption of the backward pass, used to show the gradient
/// checker catches wrong gradients.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GradientFault {
    None,
    ZeroForgetGate,
}

pub(crate) fn param_count(hidden: usize) -> usize {
    GATES * hidden * (1 + hidden) + GATES * hidden + hidden + 1
}

impl LstmModel {
    /// All-zero parameters.
    pub fn zeros(hidden_size: usize) -> Self {
        assert!(hidden_size > 0, "hidden size must be positive");
        Self {
            hidden_size,
            params: vec![0.0; param_count(hidden_size)],
        }
    }

    /// Weights uniform in `(-1/√H, 1/√H)`, zero biases except the forget
    /// gate bias, which starts at 1.
    pub fn init<R: Rng + ?Sized>(hidden_size: usize, rng: &mut R) -> Self {
        let mut model = Self::zeros(hidden_size);
        let k = 1.0 / (hidden_size as f64).sqrt();
        for w in model.gate_weights_mut() {
            *w = rng.random_range(-k..k);
        }
        let h = hidden_size;
        model.gate_bias_mut()[FORGET_GATE * h..(FORGET_GATE + 1) * h].fill(1.0);
        for w in model.head_weights_mut() {
            *w = rng.random_range(-k..k);
        }
        model
    }

    /// Builds a model from a flat parameter vector in the documented layout.
    pub fn from_params(hidden_size: usize, params: Vec<f64>) -> Result<Self> {
        if hidden_size == 0 || params.len() != param_count(hidden_size) {
            return Err(Error::InvalidArgument(format!(
                "expected {} parameters for hidden size {hidden_size}, got {}",
                param_count(hidden_size.max(1)),
                params.len()
            )));
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::Numerical("non-finite parameter".into()));
        }
        Ok(Self {
            hidden_size,
            params,
        })
    }

    pub fn hidden_size(&self) -> usize {
        self.hidden_size
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub(crate) fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn offsets(&self) -> [usize; 4] {
        let h = self.hidden_size;
        let w = GATES * h * (1 + h);
        let b = w + GATES * h;
        let v = b + h;
        [w, b, v, v + 1]
    }

    pub fn gate_weights(&self) -> &[f64] {
        &self.params[..self.offsets()[0]]
    }

    pub fn gate_weights_mut(&mut self) -> &mut [f64] {
        let end = self.offsets()[0];
        &mut self.params[..end]
    }

    pub fn gate_bias(&self) -> &[f64] {
        let o = self.offsets();
        &self.params[o[0]..o[1]]
    }

    pub fn gate_bias_mut(&mut self) -> &mut [f64] {
        let o = self.offsets();
        &mut self.params[o[0]..o[1]]
    }

    pub fn head_weights(&self) -> &[f64] {
        let o = self.offsets();
        &self.params[o[1]..o[2]]
    }

    pub fn head_weights_mut(&mut self) -> &mut [f64] {
        let o = self.offsets();
        &mut self.params[o[1]..o[2]]
    }

    pub fn head_bias(&self) -> f64 {
        self.params[self.offsets()[2]]
    }

    pub fn set_head_bias(&mut self, value: f64) {
        let i = self.offsets()[2];
        self.params[i] = value;
    }

    /// Index of the first gate-weight row belonging to `gate`.
    #[cfg(test)]
    pub(crate) fn gate_row_range(&self, gate: usize) -> std::ops::Range<usize> {
        let h = self.hidden_size;
        gate * h..(gate + 1) * h
    }

    /// Runs the recurrence from zero state over `input` and returns the head
    /// output.
    pub fn forward(&self, input: &[f64]) -> Result<f64> {
        if input.iter().any(|x| !x.is_finite()) {
            return Err(Error::Numerical("non-finite input".into()));
        }
        let mut tape = Tape::default();
        let out = self.forward_batch(&[input], &mut tape)?;
        Ok(out[0])
    }

    /// Batched forward pass. All inputs must share one length.
    pub(crate) fn forward_batch(&self, inputs: &[&[f64]], tape: &mut Tape) -> Result<Vec<f64>> {
        let h = self.hidden_size;
        let bsz = inputs.len();
        let steps = inputs.first().map_or(0, |x| x.len());
        if inputs.iter().any(|x| x.len() != steps) {
            return Err(Error::InvalidArgument("ragged batch".into()));
        }
        tape.reset(h, bsz, steps);
        let cols = 1 + h;
        let weights = self.gate_weights();
        let bias = self.gate_bias();

        for t in 0..steps {
            {
                let hcat = tape.hcat_mut(t);
                for (b, x) in inputs.iter().enumerate() {
                    hcat[b] = x[t];
                }
            }
            // z = W · [x; h]
            let (hcat, gates) = tape.hcat_and_gates(t);
            gemm(
                GATES * h,
                cols,
                bsz,
                weights,
                (cols, 1),
                hcat,
                (bsz, 1),
                0.0,
                gates,
                (bsz, 1),
            );
            for r in 0..GATES * h {
                let row = &mut gates[r * bsz..(r + 1) * bsz];
                let gate = r / h;
                for z in row.iter_mut() {
                    *z += bias[r];
                    *z = if gate == CELL_GATE { z.tanh() } else { sigmoid(*z) };
                }
            }

            let (prev_cell, cell, tanh_c, gates, next_h) = tape.step_views(t);
            for j in 0..h {
                for b in 0..bsz {
                    let k = j * bsz + b;
                    let i = gates[(INPUT_GATE * h + j) * bsz + b];
                    let f = gates[(FORGET_GATE * h + j) * bsz + b];
                    let g = gates[(CELL_GATE * h + j) * bsz + b];
                    let o = gates[(OUTPUT_GATE * h + j) * bsz + b];
                    let c = f * prev_cell[k] + i * g;
                    cell[k] = c;
                    let tc = c.tanh();
                    tanh_c[k] = tc;
                    next_h[k] = o * tc;
                }
            }
        }

        let head = self.head_weights();
        let c = self.head_bias();
        let last_h = tape.last_hidden();
        let mut out = vec![c; bsz];
        for j in 0..h {
            let row = &last_h[j * bsz..(j + 1) * bsz];
            for (o, hv) in out.iter_mut().zip(row) {
                *o += head[j] * hv;
            }
        }
        if out.iter().any(|y| !y.is_finite()) {
            return Err(Error::Numerical("non-finite LSTM output".into()));
        }
        Ok(out)
    }

    /// Mean squared error over the batch and its gradient with respect to
    /// every parameter (written to `grad`, same layout as the parameters).
    pub(crate) fn loss_and_grad(
        &self,
        inputs: &[&[f64]],
        targets: &[f64],
        tape: &mut Tape,
        grad: &mut [f64],
        fault: GradientFault,
    ) -> Result<f64> {
        let out = self.forward_batch(inputs, tape)?;
        let bsz = out.len();
        let mut loss = 0.0;
        let mut dout = vec![0.0; bsz];
        for b in 0..bsz {
            let r = out[b] - targets[b];
            loss += r * r;
            dout[b] = 2.0 * r / bsz as f64;
        }
        loss /= bsz as f64;
        self.backward(&dout, tape, grad, fault);
        Ok(loss)
    }

    fn backward(&self, dout: &[f64], tape: &mut Tape, grad: &mut [f64], fault: GradientFault) {
        let h = self.hidden_size;
        let bsz = dout.len();
        let steps = tape.steps;
        let cols = 1 + h;
        grad.fill(0.0);
        let o = self.offsets();
        let (g_w, rest) = grad.split_at_mut(o[0]);
        let (g_b, rest) = rest.split_at_mut(o[1] - o[0]);
        let (g_v, g_c) = rest.split_at_mut(h);

        let head = self.head_weights();
        let last_h = tape.last_hidden().to_vec();
        let mut dh = vec![0.0; h * bsz];
        for j in 0..h {
            for b in 0..bsz {
                g_v[j] += dout[b] * last_h[j * bsz + b];
                dh[j * bsz + b] = head[j] * dout[b];
            }
        }
        g_c[0] = dout.iter().sum();

        let weights = self.gate_weights();
        let mut dcell = vec![0.0; h * bsz];
        let mut dz = vec![0.0; GATES * h * bsz];
        for t in (0..steps).rev() {
            let (prev_cell, _cell, tanh_c, gates) = tape.backward_views(t);
            for j in 0..h {
                for b in 0..bsz {
                    let k = j * bsz + b;
                    let idx = |gate: usize| (gate * h + j) * bsz + b;
                    let i = gates[idx(INPUT_GATE)];
                    let f = gates[idx(FORGET_GATE)];
                    let g = gates[idx(CELL_GATE)];
                    let og = gates[idx(OUTPUT_GATE)];
                    let tc = tanh_c[k];
                    let d_o = dh[k] * tc;
                    let dc = dcell[k] + dh[k] * og * (1.0 - tc * tc);
                    dz[idx(INPUT_GATE)] = dc * g * i * (1.0 - i);
                    dz[idx(FORGET_GATE)] = match fault {
                        GradientFault::ZeroForgetGate => 0.0,
                        GradientFault::None => dc * prev_cell[k] * f * (1.0 - f),
                    };
                    dz[idx(CELL_GATE)] = dc * i * (1.0 - g * g);
                    dz[idx(OUTPUT_GATE)] = d_o * og * (1.0 - og);
                    dcell[k] = dc * f;
                }
            }

            // dW += dz · [x; h]^T
            let hcat = tape.hcat(t);
            gemm(
                GATES * h,
                bsz,
                cols,
                &dz,
                (bsz, 1),
                hcat,
                (1, bsz),
                1.0,
                g_w,
                (cols, 1),
            );
            for r in 0..GATES * h {
                g_b[r] += dz[r * bsz..(r + 1) * bsz].iter().sum::<f64>();
            }

            if t > 0 {
                // dh_{t-1} = W[:, 1..]^T · dz
                gemm(
                    h,
                    GATES * h,
                    bsz,
                    &weights[1..],
                    (1, cols),
                    &dz,
                    (bsz, 1),
                    0.0,
                    &mut dh,
                    (bsz, 1),
                );
            }
        }
    }
}

/// Forward pass of `model` on one input window.
pub fn lstm_forward(model: &LstmModel, input: &[f64]) -> Result<f64> {
    model.forward(input)
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// `c = a · b + beta · c` for strided row/column layouts.
///
/// Slices are bounds-checked against the largest index the strides reach.
#[allow(clippy::too_many_arguments)]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    (rsa, csa): (usize, usize),
    b: &[f64],
    (rsb, csb): (usize, usize),
    beta: f64,
    c: &mut [f64],
    (rsc, csc): (usize, usize),
) {
    if m == 0 || n == 0 {
        return;
    }
    let last = |rows: usize, cols: usize, rs: usize, cs: usize| (rows - 1) * rs + (cols - 1) * cs;
    if k > 0 {
        assert!(a.len() > last(m, k, rsa, csa));
        assert!(b.len() > last(k, n, rsb, csb));
    }
    assert!(c.len() > last(m, n, rsc, csc));
    // SAFETY: the assertions above guarantee every strided access of the
    // m×k, k×n and m×n operands stays inside the borrowed slices, and `c`
    // is uniquely borrowed so it cannot alias `a` or `b`.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa as isize,
            csa as isize,
            b.as_ptr(),
            rsb as isize,
            csb as isize,
            beta,
            c.as_mut_ptr(),
            rsc as isize,
            csc as isize,
        );
    }
}

/// Activations cached by the forward pass for backpropagation.
///
/// Every buffer is `rows × batch`, row-major.
#[derive(Debug, Default)]
pub(crate) struct Tape {
    hidden: usize,
    batch: usize,
    steps: usize,
    /// Per step: `[x_t; h_{t-1}]`, `(1+H) × B`; one extra slot holds `h_T`.
    hcat: Vec<f64>,
    /// Per step: activated gates, `4H × B`.
    gates: Vec<f64>,
    /// Cell states `c_0 .. c_T`, `H × B` each.
    cell: Vec<f64>,
    /// Per step: `tanh(c_t)`.
    tanh_c: Vec<f64>,
}

impl Tape {
    fn reset(&mut self, hidden: usize, batch: usize, steps: usize) {
        self.hidden = hidden;
        self.batch = batch;
        self.steps = steps;
        let hb = hidden * batch;
        self.hcat.clear();
        self.hcat.resize((steps + 1) * (1 + hidden) * batch, 0.0);
        self.gates.clear();
        self.gates.resize(steps * GATES * hb, 0.0);
        self.cell.clear();
        self.cell.resize((steps + 1) * hb, 0.0);
        self.tanh_c.clear();
        self.tanh_c.resize(steps * hb, 0.0);
    }

    fn hcat_len(&self) -> usize {
        (1 + self.hidden) * self.batch
    }

    fn hcat(&self, t: usize) -> &[f64] {
        let n = self.hcat_len();
        &self.hcat[t * n..(t + 1) * n]
    }

    fn hcat_mut(&mut self, t: usize) -> &mut [f64] {
        let n = self.hcat_len();
        &mut self.hcat[t * n..(t + 1) * n]
    }

    fn hcat_and_gates(&mut self, t: usize) -> (&[f64], &mut [f64]) {
        let n = self.hcat_len();
        let g = GATES * self.hidden * self.batch;
        (
            &self.hcat[t * n..(t + 1) * n],
            &mut self.gates[t * g..(t + 1) * g],
        )
    }

    /// `(c_{t-1}, c_t, tanh(c_t), gates_t, h_t slot)` for step `t`.
    fn step_views(&mut self, t: usize) -> (&[f64], &mut [f64], &mut [f64], &[f64], &mut [f64]) {
        let hb = self.hidden * self.batch;
        let n = self.hcat_len();
        let g = GATES * hb;
        let (before, after) = self.cell.split_at_mut((t + 1) * hb);
        let prev_cell = &before[t * hb..];
        let cell = &mut after[..hb];
        let tanh_c = &mut self.tanh_c[t * hb..(t + 1) * hb];
        let gates = &self.gates[t * g..(t + 1) * g];
        // h_t occupies rows 1..=H of the next step's concatenated input
        let next_h = &mut self.hcat[(t + 1) * n + self.batch..(t + 2) * n];
        (prev_cell, cell, tanh_c, gates, next_h)
    }

    fn backward_views(&self, t: usize) -> (&[f64], &[f64], &[f64], &[f64]) {
        let hb = self.hidden * self.batch;
        let g = GATES * hb;
        (
            &self.cell[t * hb..(t + 1) * hb],
            &self.cell[(t + 1) * hb..(t + 2) * hb],
            &self.tanh_c[t * hb..(t + 1) * hb],
            &self.gates[t * g..(t + 1) * g],
        )
    }

    fn last_hidden(&self) -> &[f64] {
        let n = self.hcat_len();
        &self.hcat[self.steps * n + self.batch..(self.steps + 1) * n]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn sig(x: f64) -> f64 {
        1.0 / (1.0 + (-x).exp())
    }

    #[test]
    fn zero_network_outputs_zero() {
        let m = LstmModel::zeros(8);
        assert_eq!(m.forward(&[1.0, -3.0, 2.5]).unwrap(), 0.0);
    }

    #[test]
    fn hand_unrolled_single_unit() {
        // H = 1: each gate has weights (w_x, w_h) and a bias.
        let (wi, ui, bi) = (0.5, -0.3, 0.1);
        let (wf, uf, bf) = (-0.4, 0.2, 1.0);
        let (wg, ug, bg) = (0.8, 0.6, -0.2);
        let (wo, uo, bo) = (0.3, -0.7, 0.05);
        let (v, c_head) = (1.5, -0.25);
        let params = vec![wi, ui, wf, uf, wg, ug, wo, uo, bi, bf, bg, bo, v, c_head];
        let m = LstmModel::from_params(1, params).unwrap();

        let (mut h, mut c) = (0.0f64, 0.0f64);
        for x in [1.0, -1.0] {
            let i = sig(wi * x + ui * h + bi);
            let f = sig(wf * x + uf * h + bf);
            let g = (wg * x + ug * h + bg).tanh();
            let o = sig(wo * x + uo * h + bo);
            c = f * c + i * g;
            h = o * c.tanh();
        }
        let expected = v * h + c_head;
        let got = m.forward(&[1.0, -1.0]).unwrap();
        assert!((got - expected).abs() < 1e-14, "{got} vs {expected}");
    }

    #[test]
    fn batch_matches_single() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let m = LstmModel::init(6, &mut rng);
        let xs: Vec<Vec<f64>> = (0..5)
            .map(|_| (0..4).map(|_| rng.random_range(-2.0..2.0)).collect())
            .collect();
        let refs: Vec<&[f64]> = xs.iter().map(|x| x.as_slice()).collect();
        let batch = m.forward_batch(&refs, &mut Tape::default()).unwrap();
        for (x, y) in xs.iter().zip(batch) {
            assert_eq!(m.forward(x).unwrap(), y);
        }
    }

    #[test]
    fn forward_is_deterministic() {
        let m = LstmModel::init(16, &mut ChaCha8Rng::seed_from_u64(1));
        let x = [0.3, -0.1, 0.9, 1.2];
        assert_eq!(m.forward(&x).unwrap().to_bits(), m.forward(&x).unwrap().to_bits());
    }

    #[test]
    fn init_layout() {
        let m = LstmModel::init(4, &mut ChaCha8Rng::seed_from_u64(2));
        assert_eq!(m.params().len(), 4 * 4 * 5 + 16 + 4 + 1);
        let b = m.gate_bias();
        assert!(b[m.gate_row_range(FORGET_GATE)].iter().all(|&x| x == 1.0));
        assert!(b[m.gate_row_range(INPUT_GATE)].iter().all(|&x| x == 0.0));
        assert!(m.gate_weights().iter().all(|w| w.abs() < 0.5));
        assert_eq!(m.head_bias(), 0.0);
    }

    #[test]
    fn rejects_bad_params() {
        assert!(LstmModel::from_params(2, vec![0.0; 3]).is_err());
        let mut p = vec![0.0; param_count(2)];
        p[0] = f64::NAN;
        assert!(LstmModel::from_params(2, p).is_err());
        assert!(LstmModel::zeros(2).forward(&[f64::NAN]).is_err());
    }
}
