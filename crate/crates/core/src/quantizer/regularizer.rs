//! Quantization regularization.
//!
//! The penalty `E_q(W) = Σ_k |W_k − Q(W_k)|` has gradient `sgn(W_k − Q(W_k))`,
//! a constant-magnitude pull of each weight toward its nearest level. During
//! training it is applied next to the data-gradient step:
//!
//! ```text
//! W ← W − η·∂E_D/∂W − η·λ·sgn(W − Q(W))
//! ```

use super::scheme::QuantizationScheme;
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::nn::{train_with, Network, ParamGroups, StepHook, TrainConfig, TrainLog};
use crate::tensor::{Real, Tensor};

/// How λ evolves over training.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum QrSchedule {
    Constant,
    /// Linear ramp from 0 to λ over the first `fraction` of training.
    LinearRamp { fraction: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QrConfig {
    pub lambda: f64,
    pub schedule: QrSchedule,
}

impl Default for QrConfig {
    fn default() -> Self {
        Self { lambda: 1e-3, schedule: QrSchedule::LinearRamp { fraction: 0.25 } }
    }
}

impl QrConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::Config(format!("lambda must be nonnegative, got {}", self.lambda)));
        }
        if let QrSchedule::LinearRamp { fraction } = self.schedule {
            if !(0.0..=1.0).contains(&fraction) {
                return Err(Error::Config(format!("ramp fraction must be in [0, 1], got {fraction}")));
            }
        }
        Ok(())
    }

    /// λ at `progress` ∈ [0, 1] of training.
    pub fn lambda_at(&self, progress: f64) -> f64 {
        match self.schedule {
            QrSchedule::Constant => self.lambda,
            QrSchedule::LinearRamp { fraction } if fraction > 0.0 => self.lambda * (progress / fraction).min(1.0),
            QrSchedule::LinearRamp { .. } => self.lambda,
        }
    }
}

/// `Σ_k |W_k − Q(W_k)|` over all weights (biases excluded).
pub fn qr_penalty<T: Real>(net: &Network<T>, scheme: &QuantizationScheme) -> Result<f64> {
    let per_layer = scheme.per_layer(net)?;
    let mut total = 0.0;
    for (i, levels) in per_layer.into_iter().enumerate() {
        if let Some(levels) = levels {
            total += net.param(i).unwrap().weight.data().iter().map(|&w| (w - levels.nearest_in(w)).abs().as_f64()).sum::<f64>();
        }
    }
    Ok(total)
}

/// `sgn(W − Q(W))` per weight layer, `None` for layers without weights.
/// Entries are −1, 0 or +1; 0 exactly when the weight sits on a level.
pub fn qr_update_term<T: Real>(net: &Network<T>, scheme: &QuantizationScheme) -> Result<Vec<Option<Tensor<T>>>> {
    let per_layer = scheme.per_layer(net)?;
    Ok(per_layer
        .into_iter()
        .enumerate()
        .map(|(i, levels)| {
            levels.map(|levels| {
                net.param(i).unwrap().weight.map(|w| sign(w - levels.nearest_in(w)))
            })
        })
        .collect())
}

fn sign<T: Real>(v: T) -> T {
    if v > T::zero() {
        T::one()
    } else if v < T::zero() {
        -T::one()
    } else {
        T::zero()
    }
}

/// One regularization step `W ← W − step·sgn(W − Q(W))` with `step = η·λ`.
pub fn apply_qr_step<T: Real>(net: &mut Network<T>, scheme: &QuantizationScheme, step: f64) -> Result<()> {
    let per_layer = scheme.per_layer(net)?;
    if step == 0.0 {
        return Ok(());
    }
    let step = T::from_f64_lossy(step);
    for (i, levels) in per_layer.into_iter().enumerate() {
        if let Some(levels) = levels {
            for w in net.param_mut(i).unwrap().weight.data_mut() {
                *w = *w - step * sign(*w - levels.nearest_in(*w));
            }
        }
    }
    Ok(())
}

struct QrHook<'a> {
    scheme: &'a QuantizationScheme,
    qr: QrConfig,
}

impl<T: Real> StepHook<T> for QrHook<'_> {
    fn after_step(&mut self, net: &mut Network<T>, lr: f64, progress: f64) -> Result<()> {
        apply_qr_step(net, self.scheme, lr * self.qr.lambda_at(progress))
    }
}

/// Trains with the quantization regularizer. Weights stay continuous; snap
/// the result with [`super::quantize_network`] for deployment.
///
/// The regularizer step is applied after the (momentum) data step, so with
/// λ = 0 the trajectory equals plain [`crate::nn::train`].
pub fn train_with_qr<T: Real>(
    net: &Network<T>,
    data: &Dataset,
    config: &TrainConfig,
    qr: &QrConfig,
    scheme: &QuantizationScheme,
) -> Result<(Network<T>, TrainLog)> {
    qr.validate()?;
    scheme.check_covers(net)?;
    let mut out = net.clone();
    let log = train_with(&mut out, data, config, ParamGroups::All, &mut QrHook { scheme, qr: *qr })?;
    Ok((out, log))
}

/// Fraction of weights within `tolerance` of their nearest level.
pub fn fraction_near_levels<T: Real>(net: &Network<T>, scheme: &QuantizationScheme, tolerance: f64) -> Result<f64> {
    let per_layer = scheme.per_layer(net)?;
    let (mut near, mut total) = (0usize, 0usize);
    for (i, levels) in per_layer.into_iter().enumerate() {
        if let Some(levels) = levels {
            for &w in net.param(i).unwrap().weight.data() {
                total += 1;
                if (w - levels.nearest_in(w)).abs().as_f64() <= tolerance {
                    near += 1;
                }
            }
        }
    }
    Ok(if total == 0 { 1.0 } else { near as f64 / total as f64 })
}
