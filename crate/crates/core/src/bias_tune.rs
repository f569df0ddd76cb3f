//! Bias tuning: with weights frozen at their quantized (or noisy) values,
//! retrain only the biases so each neuron absorbs the mean activation shift
//! `Δy_j = Σ_i ΔW_ji·x_i` caused by the weight deviation.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::nn::{train_with, LrSchedule, Network, NoHook, ParamGroups, TrainConfig, TrainLog};
use crate::tensor::Real;

#[derive(Debug, Clone, PartialEq)]
pub struct BiasTuneConfig {
    /// Zero epochs makes [`bias_tune`] the identity.
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub momentum: f64,
    pub seed: u64,
}

impl Default for BiasTuneConfig {
    fn default() -> Self {
        Self { epochs: 2, learning_rate: 0.01, batch_size: 64, momentum: 0.9, seed: 7 }
    }
}

impl BiasTuneConfig {
    /// Defaults derived from the main training run: same learning rate,
    /// batch size and momentum, and 20% of its epochs (at least one).
    pub fn from_training(train: &TrainConfig, seed: u64) -> Self {
        Self {
            epochs: (train.epochs / 5).max(1),
            learning_rate: train.learning_rate,
            batch_size: train.batch_size,
            momentum: train.momentum,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!("bias learning rate must be positive, got {}", self.learning_rate)));
        }
        self.train_config().validate()
    }

    fn train_config(&self) -> TrainConfig {
        TrainConfig {
            learning_rate: self.learning_rate,
            epochs: self.epochs,
            batch_size: self.batch_size,
            momentum: self.momentum,
            weight_decay: 0.0,
            schedule: LrSchedule::Constant,
            seed: self.seed,
        }
    }
}

/// Relearns the biases of `net` on `data` with all weights frozen.
///
/// Uses the training loss of the main run, with gradients taken only with
/// respect to the biases. Every weight tensor of the result is bit-identical
/// to the input.
pub fn bias_tune<T: Real>(net: &Network<T>, data: &Dataset, config: &BiasTuneConfig) -> Result<(Network<T>, TrainLog)> {
    config.validate()?;
    let mut out = net.clone();
    if config.epochs == 0 {
        return Ok((out, TrainLog::default()));
    }
    let log = train_with(&mut out, data, &config.train_config(), ParamGroups::BiasesOnly, &mut NoHook)?;
    Ok((out, log))
}

/// Per-layer bias change between two networks of the same architecture.
#[derive(Debug, Clone, PartialEq)]
pub struct BiasDeltaReport {
    /// `(layer, mean |Δb|, max |Δb|)` in network order.
    pub rows: Vec<(String, f64, f64)>,
}

impl BiasDeltaReport {
    pub fn between<T: Real>(before: &Network<T>, after: &Network<T>) -> Result<Self> {
        if before.layers() != after.layers() || before.input_shape() != after.input_shape() {
            return Err(Error::Config("bias delta needs two networks of the same architecture".into()));
        }
        let rows = before
            .weight_layers()
            .map(|(i, name)| {
                let (b0, b1) = (&before.param(i).unwrap().bias, &after.param(i).unwrap().bias);
                let deltas: Vec<f64> = b0.data().iter().zip(b1.data()).map(|(&x, &y)| (y - x).abs().as_f64()).collect();
                let mean = deltas.iter().sum::<f64>() / deltas.len().max(1) as f64;
                let max = deltas.iter().copied().fold(0.0, f64::max);
                (name.to_string(), mean, max)
            })
            .collect();
        Ok(Self { rows })
    }

    /// Whitespace-separated text: a header line, then one line per layer.
    pub fn to_text(&self) -> String {
        let mut out = String::from("layer mean_abs_delta max_abs_delta\n");
        for (name, mean, max) in &self.rows {
            writeln!(out, "{name} {mean:.9e} {max:.9e}").unwrap();
        }
        out
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }
}
