//! Mean-squared error, Adam, and the epoch loop used for every network.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::Rng;
use crate::params::ParameterSet;

/// A parameter set that can score a batch and differentiate the score.
pub trait Learner: ParameterSet {
    type Sample: Sync;

    /// Mean loss over `batch` and its gradient, shaped like `self`.
    fn loss_and_gradient(&self, batch: &[&Self::Sample]) -> Result<(f64, Self)>;

    fn loss(&self, batch: &[&Self::Sample]) -> Result<f64> {
        Ok(self.loss_and_gradient(batch)?.0)
    }
}

pub fn mse(pred: &[f64], actual: &[f64]) -> Result<f64> {
    if pred.len() != actual.len() {
        return Err(Error::shape("mse", pred.len(), actual.len()));
    }
    if pred.is_empty() {
        return Err(Error::invalid("mse of empty input"));
    }
    Ok(pred
        .iter()
        .zip(actual)
        .map(|(p, a)| (p - a) * (p - a))
        .sum::<f64>()
        / pred.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Moment estimates over the flattened parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
    pub config: AdamConfig,
}

impl AdamState {
    pub fn new(num_params: usize, config: AdamConfig) -> Self {
        AdamState {
            m: vec![0.0; num_params],
            v: vec![0.0; num_params],
            t: 0,
            config,
        }
    }
}

/// One bias-corrected Adam update of `params` in place.
pub fn adam_step<P: ParameterSet>(state: &mut AdamState, params: &mut P, grads: &P) -> Result<()> {
    let n = params.num_params();
    if grads.num_params() != n || state.m.len() != n {
        return Err(Error::shape(
            "adam_step",
            format!("{n} parameters, {} moments", state.m.len()),
            format!("{} gradients", grads.num_params()),
        ));
    }
    state.t += 1;
    let AdamConfig {
        lr,
        beta1,
        beta2,
        eps,
    } = state.config;
    let bc1 = 1.0 - beta1.powi(state.t as i32);
    let bc2 = 1.0 - beta2.powi(state.t as i32);
    let mut k = 0;
    let grad_tensors = grads.tensors();
    for (p, (_, g)) in params.tensors_mut().into_iter().zip(grad_tensors) {
        for (w, gi) in p.data_mut().iter_mut().zip(g.data()) {
            let m = beta1 * state.m[k] + (1.0 - beta1) * gi;
            let v = beta2 * state.v[k] + (1.0 - beta2) * gi * gi;
            state.m[k] = m;
            state.v[k] = v;
            let m_hat = m / bc1;
            let v_hat = v / bc2;
            *w -= lr * m_hat / (v_hat.sqrt() + eps);
            k += 1;
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    /// Batches at least as large as the data set are full-batch.
    pub batch_size: usize,
    /// Start from the previous solution when one is supplied.
    pub warm_start: bool,
    /// Rescale the gradient when its global norm exceeds this value.
    pub clip_norm: Option<f64>,
    pub seed: u64,
    pub adam: AdamConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 200,
            batch_size: 3000,
            warm_start: true,
            clip_norm: None,
            seed: 0,
            adam: AdamConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::config("epochs", "must be at least 1"));
        }
        if self.batch_size == 0 {
            return Err(Error::config("batch_size", "must be at least 1"));
        }
        if let Some(c) = self.clip_norm {
            if !(c > 0.0) {
                return Err(Error::config("clip_norm", "must be positive"));
            }
        }
        if !(self.adam.lr >= 0.0) || !(self.adam.eps > 0.0) {
            return Err(Error::config("adam", "lr must be >= 0 and eps > 0"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct FitResult<L> {
    pub model: L,
    /// Mean training loss of each epoch, measured before that epoch's updates.
    pub losses: Vec<f64>,
}

/// Mini-batch Adam for `cfg.epochs` epochs.
///
/// Starts from `previous` when `cfg.warm_start` is set and one is given,
/// otherwise from `initial`. Fails with [`Error::Diverged`] as soon as the
/// loss or the parameters stop being finite.
pub fn fit<L: Learner>(
    initial: &L,
    previous: Option<&L>,
    data: &[L::Sample],
    cfg: &TrainConfig,
) -> Result<FitResult<L>> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::invalid("cannot fit on an empty data set"));
    }
    let mut model = match (cfg.warm_start, previous) {
        (true, Some(p)) => p.clone(),
        _ => initial.clone(),
    };
    let mut adam = AdamState::new(model.num_params(), cfg.adam);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let full_batch = cfg.batch_size >= data.len();
    let mut rng = Rng::substream(cfg.seed, 0x5eed);
    let mut losses = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        if !full_batch {
            rng.shuffle(&mut order);
        }
        let mut epoch_loss = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<&L::Sample> = chunk.iter().map(|&i| &data[i]).collect();
            let (loss, mut grad) = model.loss_and_gradient(&batch)?;
            if !loss.is_finite() {
                return Err(Error::Diverged { epoch, loss });
            }
            epoch_loss += loss * chunk.len() as f64;
            if let Some(max) = cfg.clip_norm {
                let norm = grad.global_norm();
                if norm > max {
                    for m in grad.tensors_mut() {
                        m.scale(max / norm);
                    }
                }
            }
            adam_step(&mut adam, &mut model, &grad)?;
            if !model.is_finite() {
                return Err(Error::Diverged {
                    epoch,
                    loss: f64::NAN,
                });
            }
        }
        losses.push(epoch_loss / data.len() as f64);
    }
    Ok(FitResult { model, losses })
}

/// `epoch,loss` CSV, epochs numbered from 1.
pub fn write_loss_curve(path: &Path, losses: &[f64]) -> Result<()> {
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = String::from("epoch,loss\n");
    for (i, l) in losses.iter().enumerate() {
        out.push_str(&format!("{},{}\n", i + 1, l));
    }
    f.write_all(out.as_bytes()).map_err(|e| Error::io(path, e))
}

/// Outcome of one grid-search candidate.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GridPoint {
    pub config: TrainConfig,
    pub validation_loss: f64,
}

/// Fit every candidate on `train` from `initial` and score it on
/// `validation`. Returns all points and the index of the best.
pub fn grid_search<L: Learner>(
    initial: &L,
    candidates: &[TrainConfig],
    train: &[L::Sample],
    validation: &[L::Sample],
) -> Result<(Vec<GridPoint>, usize)> {
    if candidates.is_empty() {
        return Err(Error::invalid("grid search needs at least one candidate"));
    }
    let val: Vec<&L::Sample> = validation.iter().collect();
    let mut points = Vec::with_capacity(candidates.len());
    for cfg in candidates {
        let fitted = fit(initial, None, train, cfg)?;
        points.push(GridPoint {
            config: cfg.clone(),
            validation_loss: fitted.model.loss(&val)?,
        });
    }
    let best = points
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.validation_loss.total_cmp(&b.1.validation_loss))
        .map(|(i, _)| i)
        .unwrap();
    Ok((points, best))
}
