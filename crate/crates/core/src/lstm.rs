//! Single-layer LSTM with a `tanh` dense head, hand-written forward pass and
//! backpropagation through time.
//!
//! Parameters live in one flat buffer laid out as
//! `[W_f, W_i, W_c, W_o | b_f, b_i, b_c, b_o | W_y | b_y]`, every matrix
//! row-major. Gate matrices are `H x (H + D_in)` and act on `[h; x]`.

use std::ops::Range;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Dims {
    pub hidden: usize,
    pub input: usize,
    pub output: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Gate {
    Forget = 0,
    Input = 1,
    Candidate = 2,
    Output = 3,
}

impl Gate {
    pub const ALL: [Gate; 4] = [Gate::Forget, Gate::Input, Gate::Candidate, Gate::Output];
}

impl Dims {
    pub fn new(hidden: usize, input: usize, output: usize) -> Result<Self> {
        if hidden == 0 || input == 0 || output == 0 {
            return Err(Error::InvalidArgument(format!(
                "dimensions must be positive, got H={hidden} D_in={input} D_out={output}"
            )));
        }
        Ok(Self { hidden, input, output })
    }

    /// Length of `[h; x]`.
    pub fn concat(&self) -> usize {
        self.hidden + self.input
    }

    fn gate_weights_len(&self) -> usize {
        4 * self.hidden * self.concat()
    }

    pub fn num_params(&self) -> usize {
        self.gate_weights_len() + 4 * self.hidden + self.output * self.hidden + self.output
    }

    fn gate_weight_range(&self, gate: Gate) -> Range<usize> {
        let n = self.hidden * self.concat();
        let g = gate as usize;
        g * n..(g + 1) * n
    }

    fn gate_bias_range(&self, gate: Gate) -> Range<usize> {
        let start = self.gate_weights_len() + gate as usize * self.hidden;
        start..start + self.hidden
    }

    fn all_gate_bias_range(&self) -> Range<usize> {
        let start = self.gate_weights_len();
        start..start + 4 * self.hidden
    }

    fn head_weight_range(&self) -> Range<usize> {
        let start = self.gate_weights_len() + 4 * self.hidden;
        start..start + self.output * self.hidden
    }

    fn head_bias_range(&self) -> Range<usize> {
        let start = self.head_weight_range().end;
        start..start + self.output
    }
}

macro_rules! param_views {
    ($ty:ident) => {
        impl $ty {
            pub fn dims(&self) -> Dims {
                self.dims
            }

            pub fn values(&self) -> &[f64] {
                &self.values
            }

            pub fn values_mut(&mut self) -> &mut [f64] {
                &mut self.values
            }

            pub fn gate_weight(&self, gate: Gate) -> &[f64] {
                &self.values[self.dims.gate_weight_range(gate)]
            }

            pub fn gate_bias(&self, gate: Gate) -> &[f64] {
                &self.values[self.dims.gate_bias_range(gate)]
            }

            pub fn head_weight(&self) -> &[f64] {
                &self.values[self.dims.head_weight_range()]
            }

            pub fn head_bias(&self) -> &[f64] {
                &self.values[self.dims.head_bias_range()]
            }

            pub fn all_gate_weights(&self) -> &[f64] {
                &self.values[..self.dims.gate_weights_len()]
            }

            pub fn all_gate_biases(&self) -> &[f64] {
                &self.values[self.dims.all_gate_bias_range()]
            }
        }
    };
}

/// All learnable weights and biases of the network.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    dims: Dims,
    values: Vec<f64>,
}

/// Gradient of a loss with respect to [`ModelParams`], same layout.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamGrads {
    dims: Dims,
    values: Vec<f64>,
}

param_views!(ModelParams);
param_views!(ParamGrads);

impl ModelParams {
    pub fn zeros(dims: Dims) -> Self {
        Self {
            dims,
            values: vec![0.0; dims.num_params()],
        }
    }

    pub fn from_values(dims: Dims, values: Vec<f64>) -> Result<Self> {
        if values.len() != dims.num_params() {
            return Err(Error::Shape(format!(
                "{} values for {dims:?}, expected {}",
                values.len(),
                dims.num_params()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("parameter buffer".into()));
        }
        Ok(Self { dims, values })
    }

    pub fn gate_bias_mut(&mut self, gate: Gate) -> &mut [f64] {
        let r = self.dims.gate_bias_range(gate);
        &mut self.values[r]
    }

    pub fn head_bias_mut(&mut self) -> &mut [f64] {
        let r = self.dims.head_bias_range();
        &mut self.values[r]
    }

    /// Order-sensitive 64-bit fingerprint of the exact bit patterns.
    pub fn checksum(&self) -> u64 {
        // FNV-1a
        self.values.iter().fold(0xcbf2_9ce4_8422_2325u64, |h, v| {
            v.to_bits()
                .to_le_bytes()
                .iter()
                .fold(h, |h, b| (h ^ u64::from(*b)).wrapping_mul(0x0100_0000_01b3))
        })
    }
}

impl ParamGrads {
    pub fn zeros(dims: Dims) -> Self {
        Self {
            dims,
            values: vec![0.0; dims.num_params()],
        }
    }

    pub fn from_values(dims: Dims, values: Vec<f64>) -> Result<Self> {
        if values.len() != dims.num_params() {
            return Err(Error::Shape(format!(
                "{} gradient values for {dims:?}, expected {}",
                values.len(),
                dims.num_params()
            )));
        }
        Ok(Self { dims, values })
    }

    pub fn add_assign(&mut self, other: &ParamGrads) {
        debug_assert_eq!(self.dims, other.dims);
        for (a, b) in self.values.iter_mut().zip(&other.values) {
            *a += b;
        }
    }

    pub fn scale(&mut self, k: f64) {
        self.values.iter_mut().for_each(|v| *v *= k);
    }

    pub fn l2_norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Mean of `grads`, summed in slice order.
    pub fn mean(grads: &[ParamGrads]) -> Result<ParamGrads> {
        let first = grads
            .first()
            .ok_or_else(|| Error::InvalidArgument("mean of zero gradients".into()))?;
        let mut acc = ParamGrads::zeros(first.dims);
        for g in grads {
            if g.dims != first.dims {
                return Err(Error::Shape("gradients with differing dims".into()));
            }
            acc.add_assign(g);
        }
        acc.scale(1.0 / grads.len() as f64);
        Ok(acc)
    }
}

/// Xavier-uniform weights, zero biases except the forget gate at 1.
pub fn init_params<R: Rng + ?Sized>(dims: Dims, rng: &mut R) -> ModelParams {
    let mut p = ModelParams::zeros(dims);
    let gate_scale = (6.0 / (dims.concat() + dims.hidden) as f64).sqrt();
    for gate in Gate::ALL {
        let r = dims.gate_weight_range(gate);
        for v in &mut p.values[r] {
            *v = rng.gen_range(-gate_scale..gate_scale);
        }
    }
    let head_scale = (6.0 / (dims.hidden + dims.output) as f64).sqrt();
    let r = dims.head_weight_range();
    for v in &mut p.values[r] {
        *v = rng.gen_range(-head_scale..head_scale);
    }
    p.gate_bias_mut(Gate::Forget).fill(1.0);
    p
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellState {
    pub h: Vec<f64>,
    pub c: Vec<f64>,
}

impl CellState {
    pub fn zeros(hidden: usize) -> Self {
        Self {
            h: vec![0.0; hidden],
            c: vec![0.0; hidden],
        }
    }
}

/// Everything one time step needs for backpropagation.
#[derive(Debug, Clone)]
pub struct StepCache {
    /// `[h_prev; x]`
    pub concat: Vec<f64>,
    pub c_prev: Vec<f64>,
    pub forget: Vec<f64>,
    pub input: Vec<f64>,
    pub candidate: Vec<f64>,
    pub output: Vec<f64>,
    pub tanh_c: Vec<f64>,
    pub state: CellState,
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// One LSTM step from `state` on input `x`.
pub fn cell_step(params: &ModelParams, x: &[f64], state: &CellState) -> Result<StepCache> {
    let dims = params.dims;
    let hdim = dims.hidden;
    if x.len() != dims.input || state.h.len() != hdim || state.c.len() != hdim {
        return Err(Error::Shape(format!(
            "cell step got x={} h={} c={} for {dims:?}",
            x.len(),
            state.h.len(),
            state.c.len()
        )));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("cell input".into()));
    }
    let mut concat = Vec::with_capacity(dims.concat());
    concat.extend_from_slice(&state.h);
    concat.extend_from_slice(x);

    // pre-activations of all four gates, stacked
    let mut pre: Vec<f64> = params.all_gate_biases().to_vec();
    for (row, acc) in params.all_gate_weights().chunks_exact(dims.concat()).zip(&mut pre) {
        *acc += row.iter().zip(&concat).map(|(w, z)| w * z).sum::<f64>();
    }
    let (pf, rest) = pre.split_at(hdim);
    let (pi, rest) = rest.split_at(hdim);
    let (pc, po) = rest.split_at(hdim);

    let forget: Vec<f64> = pf.iter().map(|&v| sigmoid(v)).collect();
    let input: Vec<f64> = pi.iter().map(|&v| sigmoid(v)).collect();
    let candidate: Vec<f64> = pc.iter().map(|v| v.tanh()).collect();
    let output: Vec<f64> = po.iter().map(|&v| sigmoid(v)).collect();
    let c: Vec<f64> = (0..hdim)
        .map(|k| forget[k] * state.c[k] + input[k] * candidate[k])
        .collect();
    let tanh_c: Vec<f64> = c.iter().map(|v| v.tanh()).collect();
    let h: Vec<f64> = output.iter().zip(&tanh_c).map(|(o, t)| o * t).collect();

    Ok(StepCache {
        concat,
        c_prev: state.c.clone(),
        forget,
        input,
        candidate,
        output,
        tanh_c,
        state: CellState { h, c },
    })
}

/// Record of a forward pass over one sequence.
#[derive(Debug, Clone)]
pub struct Tape {
    pub steps: Vec<StepCache>,
    pub prediction: Vec<f64>,
}

impl Tape {
    pub fn final_hidden(&self) -> &[f64] {
        &self.steps.last().expect("tape has at least one step").state.h
    }
}

/// Runs the network over `sequence` (row-major `tau x D_in`) from a zero
/// state and applies the `tanh` head to the last hidden state.
pub fn forward(params: &ModelParams, sequence: &[f64]) -> Result<Tape> {
    let dims = params.dims;
    if sequence.is_empty() || !sequence.len().is_multiple_of(dims.input) {
        return Err(Error::Shape(format!(
            "sequence of {} values is not a positive multiple of D_in={}",
            sequence.len(),
            dims.input
        )));
    }
    let mut steps: Vec<StepCache> = Vec::with_capacity(sequence.len() / dims.input);
    let zero = CellState::zeros(dims.hidden);
    for x in sequence.chunks_exact(dims.input) {
        let state = steps.last().map_or(&zero, |s| &s.state);
        steps.push(cell_step(params, x, state)?);
    }
    let h = &steps.last().expect("non-empty sequence").state.h;
    let prediction: Vec<f64> = params
        .head_weight()
        .chunks_exact(dims.hidden)
        .zip(params.head_bias())
        .map(|(row, b)| (b + row.iter().zip(h).map(|(w, v)| w * v).sum::<f64>()).tanh())
        .collect();
    if prediction.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("prediction".into()));
    }
    Ok(Tape { steps, prediction })
}

/// Mean squared error over the components of one prediction.
pub fn mse_loss(prediction: &[f64], label: &[f64]) -> Result<f64> {
    if prediction.len() != label.len() || label.is_empty() {
        return Err(Error::Shape(format!(
            "prediction has {} values, label {}",
            prediction.len(),
            label.len()
        )));
    }
    let sum: f64 = prediction.iter().zip(label).map(|(p, y)| (p - y).powi(2)).sum();
    Ok(sum / label.len() as f64)
}

/// Gradient of [`mse_loss`] for the sequence recorded in `tape`.
pub fn backward(params: &ModelParams, tape: &Tape, label: &[f64]) -> Result<ParamGrads> {
    let mut grads = ParamGrads::zeros(params.dims);
    accumulate_backward(params, tape, label, 1.0, &mut grads)?;
    Ok(grads)
}

/// Adds `weight * d(mse)/d(params)` for one sequence into `grads`.
pub fn accumulate_backward(
    params: &ModelParams,
    tape: &Tape,
    label: &[f64],
    weight: f64,
    grads: &mut ParamGrads,
) -> Result<()> {
    let dims = params.dims;
    let hdim = dims.hidden;
    let cdim = dims.concat();
    if label.len() != dims.output || tape.prediction.len() != dims.output {
        return Err(Error::Shape(format!(
            "label has {} values, model outputs {}",
            label.len(),
            dims.output
        )));
    }
    if tape.steps.is_empty() || tape.steps[0].concat.len() != cdim {
        return Err(Error::Shape("tape does not match parameters".into()));
    }
    if grads.dims != dims {
        return Err(Error::Shape("gradient buffer does not match parameters".into()));
    }

    let n = dims.output as f64;
    // through tanh of the head
    let d_head: Vec<f64> = tape
        .prediction
        .iter()
        .zip(label)
        .map(|(y, l)| weight * 2.0 * (y - l) / n * (1.0 - y * y))
        .collect();

    let h_last = tape.final_hidden();
    let mut dh = vec![0.0; hdim];
    {
        let head_w = params.head_weight();
        let r = dims.head_weight_range();
        let gw = &mut grads.values[r];
        for (o, &d) in d_head.iter().enumerate() {
            let row = &head_w[o * hdim..(o + 1) * hdim];
            for k in 0..hdim {
                gw[o * hdim + k] += d * h_last[k];
                dh[k] += d * row[k];
            }
        }
        let r = dims.head_bias_range();
        for (g, d) in grads.values[r].iter_mut().zip(&d_head) {
            *g += d;
        }
    }

    let gate_w = params.all_gate_weights();
    let mut dc = vec![0.0; hdim];
    let mut d_pre = vec![0.0; 4 * hdim];
    for step in tape.steps.iter().rev() {
        for k in 0..hdim {
            let o = step.output[k];
            let t = step.tanh_c[k];
            let dc_k = dc[k] + dh[k] * o * (1.0 - t * t);
            let f = step.forget[k];
            let i = step.input[k];
            let g = step.candidate[k];
            d_pre[k] = dc_k * step.c_prev[k] * f * (1.0 - f);
            d_pre[hdim + k] = dc_k * g * i * (1.0 - i);
            d_pre[2 * hdim + k] = dc_k * i * (1.0 - g * g);
            d_pre[3 * hdim + k] = dh[k] * t * o * (1.0 - o);
            dc[k] = dc_k * f;
        }

        let (gw, gb) = grads.values[..dims.head_weight_range().start].split_at_mut(dims.gate_weights_len());
        for (gb, d) in gb.iter_mut().zip(&d_pre) {
            *gb += d;
        }
        let mut dz = vec![0.0; cdim];
        for (row_idx, &d) in d_pre.iter().enumerate() {
            if d == 0.0 {
                continue;
            }
            let w_row = &gate_w[row_idx * cdim..(row_idx + 1) * cdim];
            let g_row = &mut gw[row_idx * cdim..(row_idx + 1) * cdim];
            for j in 0..cdim {
                g_row[j] += d * step.concat[j];
                dz[j] += d * w_row[j];
            }
        }
        dh.copy_from_slice(&dz[..hdim]);
    }
    Ok(())
}

/// A sequence and its target, borrowed.
pub trait Example {
    fn sequence(&self) -> &[f64];
    fn target(&self) -> &[f64];
}

impl Example for crate::flow_data::MultiStationSample {
    fn sequence(&self) -> &[f64] {
        &self.input
    }

    fn target(&self) -> &[f64] {
        &self.label
    }
}

impl<T: Example + ?Sized> Example for &T {
    fn sequence(&self) -> &[f64] {
        (**self).sequence()
    }

    fn target(&self) -> &[f64] {
        (**self).target()
    }
}

/// Mean per-sample MSE over a batch.
pub fn batch_loss<E: Example>(params: &ModelParams, batch: &[E]) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::InvalidArgument("empty batch".into()));
    }
    let mut total = 0.0;
    for ex in batch {
        let tape = forward(params, ex.sequence())?;
        total += mse_loss(&tape.prediction, ex.target())?;
    }
    Ok(total / batch.len() as f64)
}

/// Mean loss and mean gradient over a batch.
pub fn batch_loss_and_grad<E: Example>(params: &ModelParams, batch: &[E]) -> Result<(f64, ParamGrads)> {
    if batch.is_empty() {
        return Err(Error::InvalidArgument("empty batch".into()));
    }
    let weight = 1.0 / batch.len() as f64;
    let mut grads = ParamGrads::zeros(params.dims);
    let mut total = 0.0;
    for ex in batch {
        let tape = forward(params, ex.sequence())?;
        total += mse_loss(&tape.prediction, ex.target())?;
        accumulate_backward(params, &tape, ex.target(), weight, &mut grads)?;
    }
    Ok((total * weight, grads))
}

#[cfg(test)]
pub(crate) mod oracle {
    //! Scalar reference implementation used only by tests.

    use super::{Gate, ModelParams};

    fn sig(x: f64) -> f64 {
        1.0 / (1.0 + (-x).exp())
    }

    fn gate_pre(p: &ModelParams, gate: Gate, h: &[f64], x: &[f64], k: usize) -> f64 {
        let dims = p.dims();
        let w = p.gate_weight(gate);
        let cols = dims.hidden + dims.input;
        let mut acc = p.gate_bias(gate)[k];
        for j in 0..dims.hidden {
            acc += w[k * cols + j] * h[j];
        }
        for j in 0..dims.input {
            acc += w[k * cols + dims.hidden + j] * x[j];
        }
        acc
    }

    /// Returns `(h, c, [f, i, c~, o])` after one step.
    pub fn step(p: &ModelParams, x: &[f64], h: &[f64], c: &[f64]) -> (Vec<f64>, Vec<f64>, [Vec<f64>; 4]) {
        let hd = p.dims().hidden;
        let mut gates: [Vec<f64>; 4] = Default::default();
        let mut h_new = vec![0.0; hd];
        let mut c_new = vec![0.0; hd];
        for k in 0..hd {
            let f = sig(gate_pre(p, Gate::Forget, h, x, k));
            let i = sig(gate_pre(p, Gate::Input, h, x, k));
            let g = gate_pre(p, Gate::Candidate, h, x, k).tanh();
            let o = sig(gate_pre(p, Gate::Output, h, x, k));
            c_new[k] = f * c[k] + i * g;
            h_new[k] = o * c_new[k].tanh();
            gates[0].push(f);
            gates[1].push(i);
            gates[2].push(g);
            gates[3].push(o);
        }
        (h_new, c_new, gates)
    }

    pub fn predict(p: &ModelParams, seq: &[f64]) -> Vec<f64> {
        let dims = p.dims();
        let mut h = vec![0.0; dims.hidden];
        let mut c = vec![0.0; dims.hidden];
        for x in seq.chunks(dims.input) {
            let (h2, c2, _) = step(p, x, &h, &c);
            h = h2;
            c = c2;
        }
        let w = p.head_weight();
        (0..dims.output)
            .map(|o| {
                let mut acc = p.head_bias()[o];
                for k in 0..dims.hidden {
                    acc += w[o * dims.hidden + k] * h[k];
                }
                acc.tanh()
            })
            .collect()
    }

    pub fn loss(p: &ModelParams, seq: &[f64], label: &[f64]) -> f64 {
        let y = predict(p, seq);
        y.iter().zip(label).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / label.len() as f64
    }

    /// Central finite differences of `loss` in every coordinate.
    pub fn numeric_grad(p: &ModelParams, seq: &[f64], label: &[f64], eps: f64) -> Vec<f64> {
        let mut q = p.clone();
        (0..p.values().len())
            .map(|i| {
                let orig = q.values()[i];
                q.values_mut()[i] = orig + eps;
                let up = loss(&q, seq, label);
                q.values_mut()[i] = orig - eps;
                let down = loss(&q, seq, label);
                q.values_mut()[i] = orig;
                (up - down) / (2.0 * eps)
            })
            .collect()
    }
}
