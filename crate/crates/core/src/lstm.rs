//! Single-layer LSTM with a linear read-out and exact backpropagation through
//! time.
//!
//! ```text
//! f = σ(W_fx x + W_fh h' + b_f)      forget gate
//! i = σ(W_ix x + W_ih h' + b_i)      input gate
//! g = tanh(W_gx x + W_gh h' + b_g)   input node
//! o = σ(W_ox x + W_oh h' + b_o)      output gate
//! c = f ⊙ c' + i ⊙ g                 cell state
//! h = o ⊙ tanh(c)                    hidden state
//! ŷ = W_out h + b_out
//! ```
//!
//! `h'` and `c'` are the previous step's states; both start at zero.

use serde::{Deserialize, Serialize};

use crate::dataset::SequenceSample;
use crate::error::{Error, Result};
use crate::numerics::{dot, sigmoid_scalar, Matrix, Rng};
use crate::params::{expect_shape, ParameterSet};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LstmParameters {
    pub w_fx: Matrix,
    pub w_fh: Matrix,
    pub b_f: Matrix,
    pub w_ix: Matrix,
    pub w_ih: Matrix,
    pub b_i: Matrix,
    pub w_gx: Matrix,
    pub w_gh: Matrix,
    pub b_g: Matrix,
    pub w_ox: Matrix,
    pub w_oh: Matrix,
    pub b_o: Matrix,
    /// `1 x units` read-out.
    pub w_out: Matrix,
    /// `1 x 1`.
    pub b_out: Matrix,
}

impl LstmParameters {
    /// All-zero parameters.
    pub fn zeros(units: usize, inputs: usize) -> Self {
        let wx = || Matrix::zeros(units, inputs);
        let wh = || Matrix::zeros(units, units);
        let b = || Matrix::zeros(units, 1);
        LstmParameters {
            w_fx: wx(),
            w_fh: wh(),
            b_f: b(),
            w_ix: wx(),
            w_ih: wh(),
            b_i: b(),
            w_gx: wx(),
            w_gh: wh(),
            b_g: b(),
            w_ox: wx(),
            w_oh: wh(),
            b_o: b(),
            w_out: Matrix::zeros(1, units),
            b_out: Matrix::zeros(1, 1),
        }
    }

    /// Weights uniform in `±1/sqrt(fan_in)` (fan-in = matrix columns), biases
    /// zero except the forget-gate bias, which starts at 1.
    pub fn init(units: usize, inputs: usize, rng: &mut Rng) -> Result<Self> {
        if units == 0 || inputs == 0 {
            return Err(Error::invalid(format!(
                "LSTM needs units >= 1 and inputs >= 1, got {units} and {inputs}"
            )));
        }
        let mut p = LstmParameters::zeros(units, inputs);
        for m in [
            &mut p.w_fx,
            &mut p.w_fh,
            &mut p.w_ix,
            &mut p.w_ih,
            &mut p.w_gx,
            &mut p.w_gh,
            &mut p.w_ox,
            &mut p.w_oh,
            &mut p.w_out,
        ] {
            let bound = 1.0 / (m.cols() as f64).sqrt();
            m.data_mut()
                .iter_mut()
                .for_each(|v| *v = rng.uniform_range(-bound, bound));
        }
        p.b_f.data_mut().iter_mut().for_each(|v| *v = 1.0);
        Ok(p)
    }

    pub fn units(&self) -> usize {
        self.w_fx.rows()
    }

    pub fn inputs(&self) -> usize {
        self.w_fx.cols()
    }

    fn validate(&self) -> Result<()> {
        let (u, n) = (self.units(), self.inputs());
        if u == 0 || n == 0 {
            return Err(Error::invalid("LSTM parameters with zero units or inputs"));
        }
        for (name, m) in self.tensors() {
            let (r, c) = match name {
                "W_fx" | "W_ix" | "W_gx" | "W_ox" => (u, n),
                "W_fh" | "W_ih" | "W_gh" | "W_oh" => (u, u),
                "W_out" => (1, u),
                "b_out" => (1, 1),
                _ => (u, 1),
            };
            expect_shape(name, m, r, c)?;
        }
        Ok(())
    }
}

impl ParameterSet for LstmParameters {
    const KIND: &'static str = "lstm";

    fn tensors(&self) -> Vec<(&'static str, &Matrix)> {
        vec![
            ("W_fx", &self.w_fx),
            ("W_fh", &self.w_fh),
            ("b_f", &self.b_f),
            ("W_ix", &self.w_ix),
            ("W_ih", &self.w_ih),
            ("b_i", &self.b_i),
            ("W_gx", &self.w_gx),
            ("W_gh", &self.w_gh),
            ("b_g", &self.b_g),
            ("W_ox", &self.w_ox),
            ("W_oh", &self.w_oh),
            ("b_o", &self.b_o),
            ("W_out", &self.w_out),
            ("b_out", &self.b_out),
        ]
    }

    fn tensors_mut(&mut self) -> Vec<&mut Matrix> {
        vec![
            &mut self.w_fx,
            &mut self.w_fh,
            &mut self.b_f,
            &mut self.w_ix,
            &mut self.w_ih,
            &mut self.b_i,
            &mut self.w_gx,
            &mut self.w_gh,
            &mut self.b_g,
            &mut self.w_ox,
            &mut self.w_oh,
            &mut self.b_o,
            &mut self.w_out,
            &mut self.b_out,
        ]
    }

    fn from_tensors(tensors: Vec<Matrix>) -> Result<Self> {
        let [w_fx, w_fh, b_f, w_ix, w_ih, b_i, w_gx, w_gh, b_g, w_ox, w_oh, b_o, w_out, b_out]: [Matrix; 14] =
            tensors
                .try_into()
                .map_err(|v: Vec<Matrix>| Error::shape("LstmParameters", 14, v.len()))?;
        let p = LstmParameters {
            w_fx,
            w_fh,
            b_f,
            w_ix,
            w_ih,
            b_i,
            w_gx,
            w_gh,
            b_g,
            w_ox,
            w_oh,
            b_o,
            w_out,
            b_out,
        };
        p.validate()?;
        Ok(p)
    }
}

/// Recurrent state carried between steps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LstmState {
    pub c: Vec<f64>,
    pub h: Vec<f64>,
}

impl LstmState {
    pub fn zeros(units: usize) -> Self {
        LstmState {
            c: vec![0.0; units],
            h: vec![0.0; units],
        }
    }
}

/// Values at the instrumented points of one cell update.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LstmStepSignals {
    pub forget: Vec<f64>,
    /// `i ⊙ g`, the amount written into the cell.
    pub input_times_node: Vec<f64>,
    pub output_gate: Vec<f64>,
    pub cell_state: Vec<f64>,
    pub hidden_state: Vec<f64>,
    pub input_gate: Vec<f64>,
    pub input_node: Vec<f64>,
}

/// Everything backprop needs from one step.
#[derive(Debug, Clone)]
struct StepCache {
    x: Vec<f64>,
    h_prev: Vec<f64>,
    c_prev: Vec<f64>,
    f: Vec<f64>,
    i: Vec<f64>,
    g: Vec<f64>,
    o: Vec<f64>,
    c: Vec<f64>,
    tanh_c: Vec<f64>,
    h: Vec<f64>,
}

impl StepCache {
    fn signals(&self) -> LstmStepSignals {
        LstmStepSignals {
            forget: self.f.clone(),
            input_times_node: self.i.iter().zip(&self.g).map(|(a, b)| a * b).collect(),
            output_gate: self.o.clone(),
            cell_state: self.c.clone(),
            hidden_state: self.h.clone(),
            input_gate: self.i.clone(),
            input_node: self.g.clone(),
        }
    }
}

fn gate(w_x: &Matrix, w_h: &Matrix, b: &Matrix, x: &[f64], h: &[f64]) -> Vec<f64> {
    let mut z = b.data().to_vec();
    w_x.matvec_acc(x, &mut z);
    w_h.matvec_acc(h, &mut z);
    z
}

fn step_cached(p: &LstmParameters, x: &[f64], h_prev: &[f64], c_prev: &[f64]) -> StepCache {
    let mut f = gate(&p.w_fx, &p.w_fh, &p.b_f, x, h_prev);
    let mut i = gate(&p.w_ix, &p.w_ih, &p.b_i, x, h_prev);
    let mut g = gate(&p.w_gx, &p.w_gh, &p.b_g, x, h_prev);
    let mut o = gate(&p.w_ox, &p.w_oh, &p.b_o, x, h_prev);
    f.iter_mut().for_each(|v| *v = sigmoid_scalar(*v));
    i.iter_mut().for_each(|v| *v = sigmoid_scalar(*v));
    g.iter_mut().for_each(|v| *v = v.tanh());
    o.iter_mut().for_each(|v| *v = sigmoid_scalar(*v));
    let units = f.len();
    let mut c = Vec::with_capacity(units);
    let mut tanh_c = Vec::with_capacity(units);
    let mut h = Vec::with_capacity(units);
    for u in 0..units {
        let cu = f[u] * c_prev[u] + i[u] * g[u];
        let tc = cu.tanh();
        c.push(cu);
        tanh_c.push(tc);
        h.push(o[u] * tc);
    }
    StepCache {
        x: x.to_vec(),
        h_prev: h_prev.to_vec(),
        c_prev: c_prev.to_vec(),
        f,
        i,
        g,
        o,
        c,
        tanh_c,
        h,
    }
}

fn check_input(p: &LstmParameters, x: &[f64]) -> Result<()> {
    if x.len() != p.inputs() {
        return Err(Error::shape("lstm step input", p.inputs(), x.len()));
    }
    Ok(())
}

/// One cell update.
pub fn step(
    params: &LstmParameters,
    x: &[f64],
    prev: &LstmState,
) -> Result<(LstmState, LstmStepSignals)> {
    check_input(params, x)?;
    let u = params.units();
    if prev.c.len() != u || prev.h.len() != u {
        return Err(Error::shape(
            "lstm step state",
            u,
            format!("c:{} h:{}", prev.c.len(), prev.h.len()),
        ));
    }
    let cache = step_cached(params, x, &prev.h, &prev.c);
    let signals = cache.signals();
    Ok((
        LstmState {
            c: cache.c,
            h: cache.h,
        },
        signals,
    ))
}

#[inline]
fn project(p: &LstmParameters, h: &[f64]) -> f64 {
    dot(p.w_out.data(), h) + p.b_out.data()[0]
}

/// Run a sequence from the zero state.
///
/// Returns one prediction per step when `seq_out`, otherwise only the last,
/// together with the signals of every step.
pub fn forward(
    params: &LstmParameters,
    sequence: &[Vec<f64>],
    seq_out: bool,
) -> Result<(Vec<f64>, Vec<LstmStepSignals>)> {
    let (preds, caches) = forward_from(params, sequence, LstmState::zeros(params.units()))?;
    let signals = caches.iter().map(StepCache::signals).collect();
    let preds = if seq_out {
        preds
    } else {
        vec![*preds.last().expect("non-empty sequence")]
    };
    Ok((preds, signals))
}

/// Continue from `state`; returns per-step predictions and the final state.
pub fn run_from(
    params: &LstmParameters,
    sequence: &[Vec<f64>],
    state: LstmState,
) -> Result<(Vec<f64>, Vec<LstmStepSignals>, LstmState)> {
    let (preds, caches) = forward_from(params, sequence, state)?;
    let last = caches.last().expect("non-empty sequence");
    let end = LstmState {
        c: last.c.clone(),
        h: last.h.clone(),
    };
    Ok((preds, caches.iter().map(StepCache::signals).collect(), end))
}

fn forward_from(
    params: &LstmParameters,
    sequence: &[Vec<f64>],
    state: LstmState,
) -> Result<(Vec<f64>, Vec<StepCache>)> {
    if sequence.is_empty() {
        return Err(Error::invalid("empty input sequence"));
    }
    let mut caches: Vec<StepCache> = Vec::with_capacity(sequence.len());
    let mut preds = Vec::with_capacity(sequence.len());
    for x in sequence {
        check_input(params, x)?;
        let cache = match caches.last() {
            Some(prev) => step_cached(params, x, &prev.h, &prev.c),
            None => step_cached(params, x, &state.h, &state.c),
        };
        preds.push(project(params, &cache.h));
        caches.push(cache);
    }
    Ok((preds, caches))
}

/// Last-step prediction only, without keeping signals.
pub fn predict(params: &LstmParameters, sequence: &[Vec<f64>]) -> Result<f64> {
    let (preds, _) = forward_from(params, sequence, LstmState::zeros(params.units()))?;
    Ok(*preds.last().expect("non-empty sequence"))
}

/// Which outputs are supervised.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SeqOut {
    /// Many-to-one: a single label for the final step.
    #[default]
    Last,
    /// Sequence-to-sequence, loss averaged over every step.
    AllSteps,
    /// Sequence-to-sequence labels, but only the final step enters the loss.
    FinalStep,
}

impl SeqOut {
    pub fn is_sequence(self) -> bool {
        !matches!(self, SeqOut::Last)
    }
}

/// Mean-squared-error loss and its exact gradient over `batch`.
///
/// The loss is the mean over samples of the mean over supervised steps.
pub fn backward(
    params: &LstmParameters,
    batch: &[SequenceSample],
    mode: SeqOut,
) -> Result<(f64, LstmParameters)> {
    let refs: Vec<&SequenceSample> = batch.iter().collect();
    backward_refs(params, &refs, mode)
}

pub(crate) fn backward_refs(
    params: &LstmParameters,
    batch: &[&SequenceSample],
    mode: SeqOut,
) -> Result<(f64, LstmParameters)> {
    if batch.is_empty() {
        return Err(Error::invalid("empty batch"));
    }
    let units = params.units();
    let mut grad = params.zeros_like();
    let mut total = 0.0;
    let scale = 1.0 / batch.len() as f64;

    let mut dh = vec![0.0; units];
    let mut dc = vec![0.0; units];
    let mut dzf = vec![0.0; units];
    let mut dzi = vec![0.0; units];
    let mut dzg = vec![0.0; units];
    let mut dzo = vec![0.0; units];

    for sample in batch {
        let steps = sample.inputs.len();
        let expected = if mode.is_sequence() { steps } else { 1 };
        if sample.labels.len() != expected {
            return Err(Error::shape(
                "lstm labels",
                format!("{expected} labels for {mode:?}"),
                sample.labels.len(),
            ));
        }
        let (preds, caches) = forward_from(params, &sample.inputs, LstmState::zeros(units))?;

        // dL/dŷ_k for each step (zero where unsupervised)
        let mut dpred = vec![0.0; steps];
        match mode {
            SeqOut::Last | SeqOut::FinalStep => {
                let r = preds[steps - 1] - sample.labels[expected - 1];
                total += r * r;
                dpred[steps - 1] = 2.0 * r * scale;
            }
            SeqOut::AllSteps => {
                let k = steps as f64;
                for s in 0..steps {
                    let r = preds[s] - sample.labels[s];
                    total += r * r / k;
                    dpred[s] = 2.0 * r * scale / k;
                }
            }
        }

        dh.iter_mut().for_each(|v| *v = 0.0);
        dc.iter_mut().for_each(|v| *v = 0.0);
        for s in (0..steps).rev() {
            let cache = &caches[s];
            let dp = dpred[s];
            if dp != 0.0 {
                for (d, w) in dh.iter_mut().zip(params.w_out.data()) {
                    *d += dp * w;
                }
                for (gw, h) in grad.w_out.data_mut().iter_mut().zip(&cache.h) {
                    *gw += dp * h;
                }
                grad.b_out.data_mut()[0] += dp;
            }
            for u in 0..units {
                let (f, i, g, o, tc) = (cache.f[u], cache.i[u], cache.g[u], cache.o[u], cache.tanh_c[u]);
                let d_o = dh[u] * tc;
                let dcu = dc[u] + dh[u] * o * (1.0 - tc * tc);
                dzf[u] = dcu * cache.c_prev[u] * f * (1.0 - f);
                dzi[u] = dcu * g * i * (1.0 - i);
                dzg[u] = dcu * i * (1.0 - g * g);
                dzo[u] = d_o * o * (1.0 - o);
                dc[u] = dcu * f;
            }
            for (gx, gh, gb, dz) in [
                (&mut grad.w_fx, &mut grad.w_fh, &mut grad.b_f, &dzf),
                (&mut grad.w_ix, &mut grad.w_ih, &mut grad.b_i, &dzi),
                (&mut grad.w_gx, &mut grad.w_gh, &mut grad.b_g, &dzg),
                (&mut grad.w_ox, &mut grad.w_oh, &mut grad.b_o, &dzo),
            ] {
                gx.add_outer(dz, &cache.x);
                gh.add_outer(dz, &cache.h_prev);
                for (b, d) in gb.data_mut().iter_mut().zip(dz.iter()) {
                    *b += d;
                }
            }
            dh.iter_mut().for_each(|v| *v = 0.0);
            params.w_fh.tmatvec_acc(&dzf, &mut dh);
            params.w_ih.tmatvec_acc(&dzi, &mut dh);
            params.w_gh.tmatvec_acc(&dzg, &mut dh);
            params.w_oh.tmatvec_acc(&dzo, &mut dh);
        }
    }
    Ok((total * scale, grad))
}

/// Loss only; the objective the finite-difference checks differentiate.
pub fn loss(params: &LstmParameters, batch: &[SequenceSample], mode: SeqOut) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::invalid("empty batch"));
    }
    let mut total = 0.0;
    for sample in batch {
        let (preds, _) = forward_from(params, &sample.inputs, LstmState::zeros(params.units()))?;
        match mode {
            SeqOut::Last | SeqOut::FinalStep => {
                let r = preds.last().unwrap() - sample.labels.last().unwrap();
                total += r * r;
            }
            SeqOut::AllSteps => {
                let k = preds.len() as f64;
                for (p, y) in preds.iter().zip(&sample.labels) {
                    total += (p - y) * (p - y) / k;
                }
            }
        }
    }
    Ok(total / batch.len() as f64)
}

/// LSTM parameters bundled with the supervision mode; the unit the trainer
/// optimizes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LstmModel {
    pub params: LstmParameters,
    pub mode: SeqOut,
}

impl LstmModel {
    pub fn new(params: LstmParameters, mode: SeqOut) -> Self {
        LstmModel { params, mode }
    }

    pub fn predict(&self, sequence: &[Vec<f64>]) -> Result<f64> {
        predict(&self.params, sequence)
    }
}

impl ParameterSet for LstmModel {
    const KIND: &'static str = "lstm";

    fn tensors(&self) -> Vec<(&'static str, &Matrix)> {
        self.params.tensors()
    }

    fn tensors_mut(&mut self) -> Vec<&mut Matrix> {
        self.params.tensors_mut()
    }

    fn from_tensors(tensors: Vec<Matrix>) -> Result<Self> {
        Ok(LstmModel {
            params: LstmParameters::from_tensors(tensors)?,
            mode: SeqOut::Last,
        })
    }
}

impl crate::training::Learner for LstmModel {
    type Sample = SequenceSample;

    fn loss_and_gradient(&self, batch: &[&SequenceSample]) -> Result<(f64, Self)> {
        let (l, g) = backward_refs(&self.params, batch, self.mode)?;
        Ok((
            l,
            LstmModel {
                params: g,
                mode: self.mode,
            },
        ))
    }
}
