//! Three-phase learning-rate schedule: linear warm-up, flat exploration,
//! linear warm-down to zero.
//!
//! ```text
//! factor(t) = min(1, max((1 - beta2)/2 * t, t / t_warmup), (t_max - t) / t_warmdown)
//! ```
//!
//! Steps are 1-based. The warm-up takes whichever of its two ramps is
//! faster, so with the default `beta2 = 0.999` it never lasts more than 2000
//! steps regardless of `t_warmup`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_WARMUP_FRACTION_PCT: u64 = 22;
pub const DEFAULT_WARMDOWN_FRACTION_PCT: u64 = 28;

/// `round(pct/100 * t_max)` with halves rounded up, computed in integers,
/// and never below 1.
pub fn fraction_of(t_max: u64, pct: u64) -> u64 {
    ((pct * t_max + 50) / 100).max(1)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScheduleSpec {
    pub eta: f64,
    pub beta2: f64,
    pub t_max: u64,
    pub t_warmup: u64,
    pub t_warmdown: u64,
}

impl ScheduleSpec {
    /// Schedule with the default 22% warm-up and 28% warm-down.
    pub fn new(eta: f64, beta2: f64, t_max: u64) -> Result<Self> {
        let spec = Self {
            eta,
            beta2,
            t_max,
            t_warmup: fraction_of(t_max, DEFAULT_WARMUP_FRACTION_PCT),
            t_warmdown: fraction_of(t_max, DEFAULT_WARMDOWN_FRACTION_PCT),
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            return Err(Error::config(
                "lr",
                format!("must be > 0, got {}", self.eta),
            ));
        }
        if !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::config(
                "beta2",
                format!("must be in [0, 1), got {}", self.beta2),
            ));
        }
        if self.t_max == 0 {
            return Err(Error::config("t_max", "must be >= 1"));
        }
        if self.t_warmup == 0 || self.t_warmup > self.t_max {
            return Err(Error::config(
                "t_warmup",
                format!(
                    "must be in [1, t_max = {}], got {}",
                    self.t_max, self.t_warmup
                ),
            ));
        }
        if self.t_warmdown == 0 || self.t_warmdown > self.t_max {
            return Err(Error::config(
                "t_warmdown",
                format!(
                    "must be in [1, t_max = {}], got {}",
                    self.t_max, self.t_warmdown
                ),
            ));
        }
        Ok(())
    }

    /// True when warm-up and warm-down overlap and no flat phase exists.
    pub fn phases_overlap(&self) -> bool {
        self.t_warmup + self.t_warmdown > self.t_max
    }

    fn check(&self, t: u64) -> Result<()> {
        if t == 0 || t > self.t_max {
            return Err(Error::StepOutOfRange { t, max: self.t_max });
        }
        Ok(())
    }

    pub fn warmup_factor(&self, t: u64) -> f64 {
        let t = t as f64;
        ((1.0 - self.beta2) / 2.0 * t).max(t / self.t_warmup as f64)
    }

    pub fn warmdown_factor(&self, t: u64) -> f64 {
        (self.t_max - t) as f64 / self.t_warmdown as f64
    }

    /// Schedule multiplier in `[0, 1]` at step `t`.
    pub fn lr_factor(&self, t: u64) -> Result<f64> {
        self.lr_factor_with(t, true, true)
    }

    /// Multiplier with either phase optionally replaced by a constant 1.
    pub fn lr_factor_with(&self, t: u64, warmup: bool, warmdown: bool) -> Result<f64> {
        self.check(t)?;
        let mut factor = 1.0f64;
        if warmup {
            factor = factor.min(self.warmup_factor(t));
        }
        if warmdown {
            factor = factor.min(self.warmdown_factor(t));
        }
        Ok(factor)
    }

    pub fn lr_at(&self, t: u64) -> Result<f64> {
        Ok(self.lr_factor(t)? * self.eta)
    }
}
