use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::loss::softmax_cross_entropy;
use super::network::{Gradients, Network, ParamGroups, Params};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::tensor::{Real, Tensor};

const EVAL_BATCH: usize = 64;

/// Learning-rate schedule over epochs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LrSchedule {
    Constant,
    /// Multiply by `factor` once, from epoch `floor(at_fraction · epochs)` on.
    StepDecay { at_fraction: f64, factor: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub momentum: f64,
    /// L2 penalty on weights (not biases), added to the data gradient.
    pub weight_decay: f64,
    pub schedule: LrSchedule,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.01,
            epochs: 10,
            batch_size: 64,
            momentum: 0.9,
            weight_decay: 0.0,
            schedule: LrSchedule::StepDecay { at_fraction: 0.75, factor: 0.1 },
            seed: 1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!("learning rate must be positive, got {}", self.learning_rate)));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be at least 1".into()));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::Config(format!("momentum must be in [0, 1), got {}", self.momentum)));
        }
        if self.weight_decay < 0.0 {
            return Err(Error::Config("weight decay must be nonnegative".into()));
        }
        Ok(())
    }

    pub fn lr_at(&self, epoch: usize) -> f64 {
        match self.schedule {
            LrSchedule::Constant => self.learning_rate,
            LrSchedule::StepDecay { at_fraction, factor } => {
                let at = (at_fraction * self.epochs as f64).floor() as usize;
                if at > 0 && epoch >= at {
                    self.learning_rate * factor
                } else {
                    self.learning_rate
                }
            }
        }
    }
}

/// SGD with optional momentum: `v ← μ·v + g`, `p ← p − η·v`.
#[derive(Debug, Clone)]
pub struct Sgd<T = f32> {
    momentum: T,
    weight_decay: T,
    velocity: Vec<Option<Params<T>>>,
}

impl<T: Real> Sgd<T> {
    pub fn new(net: &Network<T>, config: &TrainConfig) -> Self {
        let velocity = net
            .params()
            .iter()
            .map(|p| {
                p.as_ref().map(|p| Params {
                    weight: Tensor::zeros(p.weight.shape().to_vec()),
                    bias: Tensor::zeros(p.bias.shape().to_vec()),
                })
            })
            .collect();
        Self {
            momentum: T::from_f64_lossy(config.momentum),
            weight_decay: T::from_f64_lossy(config.weight_decay),
            velocity,
        }
    }

    /// Updates the parameter groups selected by `groups`; all other tensors
    /// are left untouched.
    pub fn step(&mut self, net: &mut Network<T>, grads: &Gradients<T>, lr: f64, groups: ParamGroups) -> Result<()> {
        if grads.layers.len() != net.params().len() {
            return Err(Error::Shape(format!("{} gradient slots for {} layers", grads.layers.len(), net.params().len())));
        }
        let lr = T::from_f64_lossy(lr);
        let (mu, wd) = (self.momentum, self.weight_decay);
        for (i, ((p, g), v)) in net.params_mut_raw().iter_mut().zip(&grads.layers).zip(&mut self.velocity).enumerate() {
            let (Some(p), Some(g), Some(v)) = (p.as_mut(), g.as_ref(), v.as_mut()) else {
                continue;
            };
            if p.weight.shape() != g.weight.shape() || p.bias.shape() != g.bias.shape() {
                return Err(Error::LayerShape { layer: i, message: "gradient shape does not match parameters".into() });
            }
            if groups.weights() {
                update(p.weight.data_mut(), g.weight.data(), v.weight.data_mut(), lr, mu, wd);
            }
            if groups.biases() {
                update(p.bias.data_mut(), g.bias.data(), v.bias.data_mut(), lr, mu, T::zero());
            }
        }
        Ok(())
    }
}

fn update<T: Real>(p: &mut [T], g: &[T], v: &mut [T], lr: T, mu: T, wd: T) {
    for ((p, &g), v) in p.iter_mut().zip(g).zip(v.iter_mut()) {
        *v = mu * *v + g + wd * *p;
        *p = *p - lr * *v;
    }
}

/// Called after every optimizer step. Regularizers that act directly on
/// parameters (outside the data gradient) plug in here.
pub trait StepHook<T: Real> {
    /// `progress` is the fraction of training completed, in [0, 1).
    fn after_step(&mut self, net: &mut Network<T>, lr: f64, progress: f64) -> Result<()>;
}

/// No-op hook for plain training.
pub struct NoHook;

impl<T: Real> StepHook<T> for NoHook {
    fn after_step(&mut self, _: &mut Network<T>, _: f64, _: f64) -> Result<()> {
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainLog {
    /// Mean training loss per epoch.
    pub epoch_loss: Vec<f64>,
}

/// Plain mini-batch training of all parameters.
pub fn train<T: Real>(net: &mut Network<T>, data: &Dataset, config: &TrainConfig) -> Result<TrainLog> {
    train_with(net, data, config, ParamGroups::All, &mut NoHook)
}

/// Mini-batch training restricted to `groups`, with a per-step hook.
///
/// Deterministic: the only randomness is the per-epoch shuffle, drawn from a
/// ChaCha stream seeded by `config.seed`.
pub fn train_with<T: Real>(
    net: &mut Network<T>,
    data: &Dataset,
    config: &TrainConfig,
    groups: ParamGroups,
    hook: &mut dyn StepHook<T>,
) -> Result<TrainLog> {
    config.validate()?;
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut sgd = Sgd::new(net, config);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let steps_per_epoch = data.len().div_ceil(config.batch_size);
    let total_steps = (steps_per_epoch * config.epochs).max(1);
    let mut log = TrainLog::default();
    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let lr = config.lr_at(epoch);
        let mut loss_sum = 0.0;
        for (step, chunk) in order.chunks(config.batch_size).enumerate() {
            let (x, labels) = data.batch::<T>(chunk);
            let fwd = net.forward(&x)?;
            let (loss, grad) = softmax_cross_entropy(fwd.logits(), &labels)?;
            if !loss.is_finite() {
                return Err(Error::Diverged { epoch });
            }
            loss_sum += loss * chunk.len() as f64;
            let grads = net.backward_masked(&fwd, &grad, groups)?;
            sgd.step(net, &grads, lr, groups)?;
            let progress = (epoch * steps_per_epoch + step) as f64 / total_steps as f64;
            hook.after_step(net, lr, progress)?;
        }
        let mean = loss_sum / data.len() as f64;
        log::debug!("epoch {epoch}: lr {lr:.5} loss {mean:.5}");
        log.epoch_loss.push(mean);
    }
    Ok(log)
}

/// Argmax class per sample.
pub fn predict<T: Real>(net: &Network<T>, data: &Dataset) -> Result<Vec<usize>> {
    let mut out = Vec::with_capacity(data.len());
    let mut start = 0;
    while start < data.len() {
        let end = (start + EVAL_BATCH).min(data.len());
        let (x, _) = data.range::<T>(start, end);
        let fwd = net.forward(&x)?;
        out.extend(argmax_rows(fwd.logits()));
        start = end;
    }
    Ok(out)
}

/// Fraction of samples whose argmax logit equals the label.
pub fn evaluate<T: Real>(net: &Network<T>, data: &Dataset) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let predicted = predict(net, data)?;
    let correct = predicted.iter().zip(&data.labels).filter(|(p, l)| p == l).count();
    Ok(correct as f64 / data.len() as f64)
}

/// Index of the largest entry per row; ties go to the lowest index.
pub fn argmax_rows<T: Real>(scores: &Tensor<T>) -> Vec<usize> {
    let classes = *scores.shape().last().unwrap_or(&1);
    scores
        .data()
        .chunks_exact(classes)
        .map(|row| {
            let mut best = 0;
            for (j, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = j;
                }
            }
            best
        })
        .collect()
}
