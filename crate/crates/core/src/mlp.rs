//! One-hidden-layer perceptron, the memory-free baseline. Temporal structure
//! only reaches it through lagged copies of the inputs.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{dot, Matrix, Rng};
use crate::params::{expect_shape, ParameterSet};

pub const DEFAULT_HIDDEN: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    #[default]
    Tanh,
    /// Linear hidden layer; only useful for analytic checks.
    Identity,
}

impl Activation {
    #[inline]
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Tanh => z.tanh(),
            Activation::Identity => z,
        }
    }

    /// Derivative expressed through the activation output `a`.
    #[inline]
    fn derivative_from_output(self, a: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - a * a,
            Activation::Identity => 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpParameters {
    /// `hidden x inputs`
    pub w1: Matrix,
    /// `hidden x 1`
    pub b1: Matrix,
    /// `1 x hidden`
    pub w2: Matrix,
    /// `1 x 1`
    pub b2: Matrix,
    /// Not serialized with the tensors; loaded networks are `Tanh`.
    #[serde(default)]
    pub activation: Activation,
}

impl MlpParameters {
    pub fn zeros(hidden: usize, inputs: usize) -> Self {
        MlpParameters {
            w1: Matrix::zeros(hidden, inputs),
            b1: Matrix::zeros(hidden, 1),
            w2: Matrix::zeros(1, hidden),
            b2: Matrix::zeros(1, 1),
            activation: Activation::Tanh,
        }
    }

    /// Same scheme as the LSTM: weights uniform in `±1/sqrt(fan_in)`, zero
    /// biases.
    pub fn init(hidden: usize, inputs: usize, rng: &mut Rng) -> Result<Self> {
        if hidden == 0 || inputs == 0 {
            return Err(Error::invalid(format!(
                "MLP needs hidden >= 1 and inputs >= 1, got {hidden} and {inputs}"
            )));
        }
        let mut p = MlpParameters::zeros(hidden, inputs);
        for m in [&mut p.w1, &mut p.w2] {
            let bound = 1.0 / (m.cols() as f64).sqrt();
            m.data_mut()
                .iter_mut()
                .for_each(|v| *v = rng.uniform_range(-bound, bound));
        }
        Ok(p)
    }

    pub fn hidden(&self) -> usize {
        self.w1.rows()
    }

    pub fn inputs(&self) -> usize {
        self.w1.cols()
    }

    fn hidden_activations(&self, x: &[f64]) -> Vec<f64> {
        let mut z = self.b1.data().to_vec();
        self.w1.matvec_acc(x, &mut z);
        z.iter_mut().for_each(|v| *v = self.activation.apply(*v));
        z
    }
}

impl ParameterSet for MlpParameters {
    const KIND: &'static str = "mlp";

    fn tensors(&self) -> Vec<(&'static str, &Matrix)> {
        vec![
            ("W1", &self.w1),
            ("b1", &self.b1),
            ("W2", &self.w2),
            ("b2", &self.b2),
        ]
    }

    fn tensors_mut(&mut self) -> Vec<&mut Matrix> {
        vec![&mut self.w1, &mut self.b1, &mut self.w2, &mut self.b2]
    }

    fn from_tensors(tensors: Vec<Matrix>) -> Result<Self> {
        let [w1, b1, w2, b2]: [Matrix; 4] = tensors
            .try_into()
            .map_err(|v: Vec<Matrix>| Error::shape("MlpParameters", 4, v.len()))?;
        let (h, n) = w1.shape();
        expect_shape("b1", &b1, h, 1)?;
        expect_shape("W2", &w2, 1, h)?;
        expect_shape("b2", &b2, 1, 1)?;
        if h == 0 || n == 0 {
            return Err(Error::invalid("MLP parameters with zero hidden units or inputs"));
        }
        Ok(MlpParameters {
            w1,
            b1,
            w2,
            b2,
            activation: Activation::Tanh,
        })
    }
}

/// Feature vector and its label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpSample {
    pub features: Vec<f64>,
    pub label: f64,
}

/// `W2 · act(W1 x + b1) + b2`
pub fn mlp_forward(params: &MlpParameters, features: &[f64]) -> Result<f64> {
    if features.len() != params.inputs() {
        return Err(Error::shape("mlp input", params.inputs(), features.len()));
    }
    let a = params.hidden_activations(features);
    Ok(dot(params.w2.data(), &a) + params.b2.data()[0])
}

/// Mean-squared-error loss over `batch` and its gradient.
pub fn mlp_backward(params: &MlpParameters, batch: &[MlpSample]) -> Result<(f64, MlpParameters)> {
    let refs: Vec<&MlpSample> = batch.iter().collect();
    backward_refs(params, &refs)
}

fn backward_refs(params: &MlpParameters, batch: &[&MlpSample]) -> Result<(f64, MlpParameters)> {
    if batch.is_empty() {
        return Err(Error::invalid("empty batch"));
    }
    let mut grad = params.zeros_like();
    grad.activation = params.activation;
    let scale = 1.0 / batch.len() as f64;
    let mut total = 0.0;
    let mut dz = vec![0.0; params.hidden()];
    for s in batch {
        if s.features.len() != params.inputs() {
            return Err(Error::shape("mlp input", params.inputs(), s.features.len()));
        }
        let a = params.hidden_activations(&s.features);
        let pred = dot(params.w2.data(), &a) + params.b2.data()[0];
        let r = pred - s.label;
        total += r * r;
        let dp = 2.0 * r * scale;
        grad.b2.data_mut()[0] += dp;
        for (j, aj) in a.iter().enumerate() {
            grad.w2.data_mut()[j] += dp * aj;
            dz[j] = dp * params.w2.data()[j] * params.activation.derivative_from_output(*aj);
        }
        grad.w1.add_outer(&dz, &s.features);
        for (b, d) in grad.b1.data_mut().iter_mut().zip(&dz) {
            *b += d;
        }
    }
    Ok((total * scale, grad))
}

pub fn mlp_loss(params: &MlpParameters, batch: &[MlpSample]) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::invalid("empty batch"));
    }
    let mut total = 0.0;
    for s in batch {
        let r = mlp_forward(params, &s.features)? - s.label;
        total += r * r;
    }
    Ok(total / batch.len() as f64)
}

impl crate::training::Learner for MlpParameters {
    type Sample = MlpSample;

    fn loss_and_gradient(&self, batch: &[&MlpSample]) -> Result<(f64, Self)> {
        backward_refs(self, batch)
    }
}
