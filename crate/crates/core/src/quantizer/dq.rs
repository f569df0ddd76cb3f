//! Distribution-aware level selection.
//!
//! Candidate magnitudes for a layer are multiples `c·σ_l` of that layer's
//! weight standard deviation. The naive baseline picks one magnitude shared
//! by every layer; the distribution-aware search then refines layers one at
//! a time, in network order, keeping the others fixed.

use super::levels::LevelSet;
use super::scheme::{quantize_network, QuantizationScheme};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::nn::{evaluate, Network};
use crate::tensor::Real;

/// Default multiples of the layer weight standard deviation.
pub const DEFAULT_GRID: [f64; 7] = [0.25, 0.5, 0.75, 1.0, 1.25, 1.5, 2.0];

#[derive(Debug, Clone, PartialEq)]
pub struct LevelSearch {
    pub scheme: QuantizationScheme,
    /// Validation accuracy of the quantized network under `scheme`.
    pub val_accuracy: f64,
    /// Number of quantized networks evaluated.
    pub evaluations: usize,
}

/// Population standard deviation of each weight layer, in network order.
pub fn layer_sigmas<T: Real>(net: &Network<T>) -> Vec<(String, f64)> {
    net.weight_layers().map(|(i, name)| (name.to_string(), net.param(i).unwrap().weight.std_dev())).collect()
}

fn candidates(sigma: f64, grid: &[f64]) -> Vec<f64> {
    let mut c: Vec<f64> = grid.iter().map(|g| g * sigma).filter(|q| q.is_finite() && *q > 0.0).collect();
    c.sort_by(f64::total_cmp);
    c.dedup();
    c
}

/// Candidate magnitudes `c·σ_l` for every weight layer, in network order.
pub fn sigma_candidates<T: Real>(net: &Network<T>, grid: &[f64]) -> Result<Vec<Vec<f64>>> {
    if grid.is_empty() {
        return Err(Error::Config("empty candidate grid".into()));
    }
    if let Some(g) = grid.iter().find(|g| !(g.is_finite() && **g > 0.0)) {
        return Err(Error::Config(format!("grid multiples must be positive, got {g}")));
    }
    Ok(layer_sigmas(net).into_iter().map(|(_, s)| candidates(s, grid)).collect())
}

fn check_inputs<T: Real>(net: &Network<T>, val: &Dataset, per_layer: &[Vec<f64>]) -> Result<()> {
    if val.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let layers = net.weight_layers().count();
    if layers == 0 {
        return Err(Error::Config("network has no weight layers".into()));
    }
    if per_layer.len() != layers {
        return Err(Error::Config(format!("{} candidate lists for {layers} weight layers", per_layer.len())));
    }
    if let Some(q) = per_layer.iter().flatten().find(|q| !(q.is_finite() && **q > 0.0)) {
        return Err(Error::Config(format!("candidate magnitudes must be positive, got {q}")));
    }
    Ok(())
}

/// Validation accuracy after quantizing `net` with `scheme`.
pub fn scheme_accuracy<T: Real>(net: &Network<T>, scheme: &QuantizationScheme, val: &Dataset) -> Result<f64> {
    evaluate(&quantize_network(net, scheme)?, val)
}

/// Best single magnitude shared by all layers, searched over the union of
/// every layer's `c·σ_l` grid.
pub fn select_global_level<T: Real>(net: &Network<T>, val: &Dataset, grid: &[f64]) -> Result<LevelSearch> {
    select_global_level_among(net, val, &sigma_candidates(net, grid)?)
}

/// Best single magnitude shared by all layers, drawn from the union of the
/// per-layer candidate lists and tried in ascending order. Ties keep the
/// smaller magnitude.
pub fn select_global_level_among<T: Real>(net: &Network<T>, val: &Dataset, per_layer: &[Vec<f64>]) -> Result<LevelSearch> {
    check_inputs(net, val, per_layer)?;
    let mut all: Vec<f64> = per_layer.iter().flatten().copied().collect();
    all.sort_by(f64::total_cmp);
    all.dedup();
    if all.is_empty() {
        return Err(Error::Config("no candidate magnitudes".into()));
    }
    let mut best: Option<(QuantizationScheme, f64)> = None;
    for &q in &all {
        let scheme = QuantizationScheme::uniform(net, &LevelSet::single(q)?);
        let acc = scheme_accuracy(net, &scheme, val)?;
        log::debug!("global q={q:.5}: val {acc:.4}");
        if best.as_ref().is_none_or(|b| acc > b.1) {
            best = Some((scheme, acc));
        }
    }
    let (scheme, val_accuracy) = best.unwrap();
    Ok(LevelSearch { scheme, val_accuracy, evaluations: all.len() })
}

/// Greedy per-layer search for 1-level magnitudes on the `c·σ_l` grid.
///
/// Starts from the best shared magnitude ([`select_global_level`]) and, for
/// each weight layer in order, tries every candidate while the other layers
/// stay at their current choice. A candidate replaces the current magnitude
/// only if it strictly improves validation accuracy, so the result is never
/// worse than the shared-magnitude baseline.
pub fn select_levels_dq<T: Real>(net: &Network<T>, val: &Dataset, grid: &[f64]) -> Result<LevelSearch> {
    select_levels_among(net, val, &sigma_candidates(net, grid)?)
}

/// [`select_levels_dq`] with explicit candidate magnitudes per weight layer.
pub fn select_levels_among<T: Real>(net: &Network<T>, val: &Dataset, per_layer: &[Vec<f64>]) -> Result<LevelSearch> {
    let start = select_global_level_among(net, val, per_layer)?;
    refine_levels(net, val, per_layer, start)
}

/// The per-layer refinement step of [`select_levels_dq`] from an arbitrary
/// starting scheme.
pub fn refine_levels<T: Real>(
    net: &Network<T>,
    val: &Dataset,
    per_layer: &[Vec<f64>],
    start: LevelSearch,
) -> Result<LevelSearch> {
    check_inputs(net, val, per_layer)?;
    start.scheme.check_covers(net)?;
    let LevelSearch { mut scheme, val_accuracy: mut best_acc, mut evaluations } = start;
    let names: Vec<String> = net.weight_layers().map(|(_, n)| n.to_string()).collect();
    for (name, cands) in names.iter().zip(per_layer) {
        let current = scheme.get(name).unwrap().clone();
        let mut best_levels = current.clone();
        for &q in cands {
            let levels = LevelSet::single(q)?;
            if levels == current {
                continue;
            }
            let mut trial = scheme.clone();
            trial.set(name, levels.clone());
            let acc = scheme_accuracy(net, &trial, val)?;
            evaluations += 1;
            log::debug!("{name} q={q:.5}: val {acc:.4}");
            if acc > best_acc {
                best_acc = acc;
                best_levels = levels;
            }
        }
        scheme.set(name, best_levels);
    }
    Ok(LevelSearch { scheme, val_accuracy: best_acc, evaluations })
}
