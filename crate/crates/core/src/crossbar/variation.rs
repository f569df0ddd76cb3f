use crate::error::{Error, Result};

/// Lognormal state statistics in natural-log space of the normalized
/// conductance. A programmed (low-resistance) device is multiplied by
/// `exp(N(μ_LRS, σ_LRS²))`; an unprogrammed (high-resistance) device reads
/// `exp(N(μ_HRS, σ_HRS²))` instead of 0.
///
/// The defaults are synthetic placeholders, not measured device data.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LognormalParams {
    pub mu_hrs: f64,
    pub sigma_hrs: f64,
    pub mu_lrs: f64,
    pub sigma_lrs: f64,
}

impl Default for LognormalParams {
    fn default() -> Self {
        Self { mu_hrs: (0.01f64).ln(), sigma_hrs: 0.5, mu_lrs: 0.0, sigma_lrs: 0.1 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum VariationKind {
    /// Additive `N(0, σ²)` on each effective weight, in weight units. Only
    /// synapses with a nonzero target are perturbed unless `perturb_zero`.
    Gaussian { sigma: f64, perturb_zero: bool },
    Lognormal(LognormalParams),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VariationModel {
    pub kind: VariationKind,
    pub seed: u64,
}

impl VariationModel {
    pub fn gaussian(sigma: f64, seed: u64) -> Self {
        Self { kind: VariationKind::Gaussian { sigma, perturb_zero: false }, seed }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match self.kind {
            VariationKind::Gaussian { sigma, .. } => sigma >= 0.0 && sigma.is_finite(),
            VariationKind::Lognormal(p) => {
                p.sigma_hrs >= 0.0 && p.sigma_lrs >= 0.0 && [p.mu_hrs, p.mu_lrs, p.sigma_hrs, p.sigma_lrs].iter().all(|v| v.is_finite())
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid variation model {:?}", self.kind)))
        }
    }
}
