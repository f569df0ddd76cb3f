use std::fmt;

use crate::error::{Error, Result};
use crate::tensor::Real;

/// Positive magnitudes `q_1 < … < q_n` of an n-level quantizer.
///
/// The realized value set is `{−q_n, …, −q_1, 0, q_1, …, q_n}`: 2n + 1
/// distinct values, symmetric about and including zero.
#[derive(Debug, Clone, PartialEq)]
pub struct LevelSet {
    magnitudes: Vec<f64>,
}

impl LevelSet {
    pub fn new(magnitudes: Vec<f64>) -> Result<Self> {
        if magnitudes.is_empty() {
            return Err(Error::Levels("at least one magnitude is required".into()));
        }
        if let Some(q) = magnitudes.iter().find(|q| !(q.is_finite() && **q > 0.0)) {
            return Err(Error::Levels(format!("magnitudes must be positive and finite, got {q}")));
        }
        if magnitudes.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Levels(format!("magnitudes must be strictly ascending: {magnitudes:?}")));
        }
        Ok(Self { magnitudes })
    }

    /// The 1-level set `{−q, 0, q}`.
    pub fn single(q: f64) -> Result<Self> {
        Self::new(vec![q])
    }

    pub fn magnitudes(&self) -> &[f64] {
        &self.magnitudes
    }

    /// Number of positive levels n.
    pub fn n(&self) -> usize {
        self.magnitudes.len()
    }

    /// Smallest positive magnitude q_1.
    pub fn smallest(&self) -> f64 {
        self.magnitudes[0]
    }

    /// Smallest distance between two adjacent realized values.
    pub fn min_gap(&self) -> f64 {
        self.magnitudes
            .windows(2)
            .map(|w| w[1] - w[0])
            .fold(self.magnitudes[0], f64::min)
    }

    /// All 2n + 1 realized values in ascending order.
    pub fn values(&self) -> Vec<f64> {
        let mut v: Vec<f64> = self.magnitudes.iter().rev().map(|q| -q).collect();
        v.push(0.0);
        v.extend_from_slice(&self.magnitudes);
        v
    }

    /// Nearest realized value to `w`.
    ///
    /// Ties go to the value of smaller magnitude, so a weight exactly halfway
    /// between 0 and q_1 quantizes to 0.
    pub fn nearest(&self, w: f64) -> f64 {
        self.nearest_in(w)
    }

    /// [`LevelSet::nearest`] evaluated in the precision of `w`, so that a
    /// weight already on a level maps to itself bit-exactly.
    pub fn nearest_in<T: Real>(&self, w: T) -> T {
        let m = w.abs();
        // largest magnitude <= m
        let above = self.magnitudes.partition_point(|&q| T::from_f64_lossy(q) <= m);
        let lo = if above == 0 { T::zero() } else { T::from_f64_lossy(self.magnitudes[above - 1]) };
        let chosen = match self.magnitudes.get(above) {
            Some(&hi) => {
                let hi = T::from_f64_lossy(hi);
                if m - lo <= hi - m {
                    lo
                } else {
                    hi
                }
            }
            None => lo,
        };
        if chosen == T::zero() {
            T::zero()
        } else if w < T::zero() {
            -chosen
        } else {
            chosen
        }
    }
}

impl fmt::Display for LevelSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, q) in self.magnitudes.iter().enumerate() {
            if i > 0 {
                write!(f, " ")?;
            }
            write!(f, "{q}")?;
        }
        Ok(())
    }
}

/// Nearest element of `levels`' realized value set to `w`.
pub fn nearest_level(w: f64, levels: &LevelSet) -> f64 {
    levels.nearest(w)
}
