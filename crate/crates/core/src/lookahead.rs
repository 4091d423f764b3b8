//! Slow-weight interpolation applied every `k` steps.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::ParamTensor;

/// One slow-weight buffer per parameter, initialized to the starting
/// parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LookaheadState {
    slow_weights: Vec<ParamTensor>,
}

impl LookaheadState {
    pub fn new(params: &[ParamTensor]) -> Self {
        Self {
            slow_weights: params.to_vec(),
        }
    }

    pub fn slow_weights(&self) -> &[ParamTensor] {
        &self.slow_weights
    }

    pub(crate) fn check_matches(&self, params: &[ParamTensor]) -> Result<()> {
        if self.slow_weights.len() != params.len() {
            return Err(Error::CountMismatch {
                expected: params.len(),
                actual: self.slow_weights.len(),
            });
        }
        for (slow, p) in self.slow_weights.iter().zip(params) {
            p.expect_same_shape(slow)?;
        }
        Ok(())
    }
}

/// If `t` is a multiple of `k`, move the slow weights toward the fast ones,
/// `l <- beta * l + (1 - beta) * theta`, and overwrite the fast weights with
/// the result. Otherwise does nothing. Returns whether a sync happened.
pub fn lookahead_sync(
    params: &mut [ParamTensor],
    state: &mut LookaheadState,
    t: u64,
    k: u64,
    beta: f64,
) -> Result<bool> {
    if t == 0 {
        return Err(Error::StepOutOfRange { t, max: u64::MAX });
    }
    if k == 0 {
        return Err(Error::config("k_lookahead", "must be >= 1"));
    }
    if !t.is_multiple_of(k) {
        return Ok(false);
    }
    state.check_matches(params)?;
    for (p, slow) in params.iter_mut().zip(state.slow_weights.iter_mut()) {
        let mixed = slow
            .values()
            .iter()
            .zip(p.values())
            .map(|(l, th)| beta * l + (1.0 - beta) * th)
            .collect();
        *slow = slow.with_values(mixed)?;
        *p = p.with_values(slow.values().to_vec())?;
    }
    Ok(true)
}
