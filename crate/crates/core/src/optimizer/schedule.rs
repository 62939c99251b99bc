use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `α_k = α₀ k^{-β}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepsizeSchedule {
    pub alpha0: f64,
    pub beta: f64,
}

impl StepsizeSchedule {
    /// Accepts `α₀ > 0` and `β ∈ (1/2, 1]`, the range on which `Σ α_k = ∞`
    /// and `Σ α_k² < ∞`.
    pub fn new(alpha0: f64, beta: f64) -> Result<Self> {
        let schedule = StepsizeSchedule { alpha0, beta };
        schedule.validate()?;
        Ok(schedule)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha0 > 0.0 && self.alpha0.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "initial stepsize must be positive and finite, got {}",
                self.alpha0
            )));
        }
        if !(self.beta > 0.5 && self.beta <= 1.0) {
            return Err(Error::InvalidConfig(format!(
                "stepsize exponent must lie in (1/2, 1], got {}",
                self.beta
            )));
        }
        Ok(())
    }

    /// `α_k` for `k >= 1`.
    pub fn stepsize(&self, k: u64) -> f64 {
        debug_assert!(k >= 1, "iterations are numbered from 1");
        self.alpha0 * (k as f64).powf(-self.beta)
    }
}
