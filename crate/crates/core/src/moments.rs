//! Moment estimation and the decay term.
//!
//! Two first-moment paths live here: positive-negative momentum with a
//! running maximum of the second moment, and the plain Adam moments that a
//! Ranger21 step falls back to when positive-negative momentum is disabled.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{frobenius_norm, ParamTensor};

/// Floor on `sqrt(mean(v_hat))` in the stable decay denominator.
pub const STABLE_DECAY_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentConfig {
    /// Positive-negative mixing weight.
    pub beta0: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for MomentConfig {
    fn default() -> Self {
        Self {
            beta0: 0.9,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

fn unit_interval(field: &'static str, value: f64) -> Result<()> {
    if (0.0..1.0).contains(&value) {
        Ok(())
    } else {
        Err(Error::config(
            field,
            format!("must be in [0, 1), got {value}"),
        ))
    }
}

impl MomentConfig {
    pub fn validate(&self) -> Result<()> {
        unit_interval("beta0", self.beta0)?;
        unit_interval("beta1", self.beta1)?;
        unit_interval("beta2", self.beta2)?;
        if !(self.eps > 0.0 && self.eps.is_finite()) {
            return Err(Error::config(
                "eps",
                format!("must be > 0, got {}", self.eps),
            ));
        }
        Ok(())
    }

    /// `sqrt((1 + beta0)^2 + beta0^2)`, the update normalizer that keeps the
    /// effective step size independent of `beta0`.
    pub fn pnm_normalizer(&self) -> f64 {
        ((1.0 + self.beta0).powi(2) + self.beta0.powi(2)).sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecayConfig {
    pub lambda: f64,
    pub norm_loss_enabled: bool,
    pub stable_decay_enabled: bool,
}

impl Default for DecayConfig {
    fn default() -> Self {
        Self {
            lambda: 1e-4,
            norm_loss_enabled: true,
            stable_decay_enabled: true,
        }
    }
}

impl DecayConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::config(
                "weight_decay",
                format!("must be >= 0, got {}", self.lambda),
            ));
        }
        Ok(())
    }
}

/// Per-parameter moment buffers, all zero-initialized.
///
/// `m_prev` is the first moment from the previous step and `m_prev2` the one
/// before it. The Adam path only uses `m_prev`; `v_max` is only advanced by
/// the positive-negative path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentState {
    shape: Vec<usize>,
    m_prev: Vec<f64>,
    m_prev2: Vec<f64>,
    v: Vec<f64>,
    v_max: Vec<f64>,
}

impl MomentState {
    pub fn zeros_like(param: &ParamTensor) -> Self {
        let n = param.len();
        Self {
            shape: param.shape().to_vec(),
            m_prev: vec![0.0; n],
            m_prev2: vec![0.0; n],
            v: vec![0.0; n],
            v_max: vec![0.0; n],
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn m_prev(&self) -> &[f64] {
        &self.m_prev
    }

    pub fn m_prev2(&self) -> &[f64] {
        &self.m_prev2
    }

    pub fn v(&self) -> &[f64] {
        &self.v
    }

    pub fn v_max(&self) -> &[f64] {
        &self.v_max
    }

    pub(crate) fn check_consistent(&self) -> Result<()> {
        let n: usize = self.shape.iter().product();
        let ok = !self.shape.is_empty()
            && [&self.m_prev, &self.m_prev2, &self.v, &self.v_max]
                .iter()
                .all(|b| b.len() == n && b.iter().all(|x| x.is_finite()))
            && self.v.iter().chain(&self.v_max).all(|&x| x >= 0.0);
        if ok {
            Ok(())
        } else {
            Err(Error::Checkpoint(
                "moment buffers inconsistent with their shape".into(),
            ))
        }
    }

    fn expect_shape(&self, g: &ParamTensor) -> Result<()> {
        if self.shape != g.shape() {
            return Err(Error::ShapeMismatch {
                name: g.name().to_owned(),
                expected: self.shape.clone(),
                actual: g.shape().to_vec(),
            });
        }
        Ok(())
    }
}

/// Update vector and bias-corrected second moment for one step.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentUpdate {
    pub u: ParamTensor,
    pub v_hat: ParamTensor,
}

fn check_step(t: u64) -> Result<i32> {
    if t == 0 || t > i32::MAX as u64 {
        return Err(Error::StepOutOfRange {
            t,
            max: i32::MAX as u64,
        });
    }
    Ok(t as i32)
}

/// Positive-negative momentum with a max-tracked second moment.
///
/// Advances `state` in place: the new first moment replaces the oldest
/// buffer and the two first-moment slots are then swapped, so afterwards
/// `m_prev` holds `m_t` and `m_prev2` holds `m_{t-1}`.
pub fn pnm_update(
    state: &mut MomentState,
    g: &ParamTensor,
    t: u64,
    cfg: &MomentConfig,
) -> Result<MomentUpdate> {
    let ti = check_step(t)?;
    state.expect_shape(g)?;
    let b1_sq = cfg.beta1 * cfg.beta1;
    let bc1 = 1.0 - cfg.beta1.powi(ti);
    let bc2 = 1.0 - cfg.beta2.powi(ti);
    let norm = cfg.pnm_normalizer();

    let n = g.len();
    let mut u = Vec::with_capacity(n);
    let mut v_hat = Vec::with_capacity(n);
    for (i, &gi) in g.values().iter().enumerate() {
        let m = b1_sq * state.m_prev2[i] + (1.0 - b1_sq) * gi;
        let m_hat = ((1.0 + cfg.beta0) * m - cfg.beta0 * state.m_prev[i]) / bc1;
        let v = cfg.beta2 * state.v[i] + (1.0 - cfg.beta2) * gi * gi;
        let v_max = state.v_max[i].max(v);
        let vh = v_max / bc2;
        u.push(m_hat / (norm * (vh.sqrt() + cfg.eps)));
        v_hat.push(vh);
        state.m_prev2[i] = m;
        state.v[i] = v;
        state.v_max[i] = v_max;
    }
    std::mem::swap(&mut state.m_prev, &mut state.m_prev2);

    Ok(MomentUpdate {
        u: g.with_values(u)?,
        v_hat: g.with_values(v_hat)?,
    })
}

/// Plain Adam moments with bias correction.
pub fn adam_update(
    state: &mut MomentState,
    g: &ParamTensor,
    t: u64,
    cfg: &MomentConfig,
) -> Result<MomentUpdate> {
    let ti = check_step(t)?;
    state.expect_shape(g)?;
    let bc1 = 1.0 - cfg.beta1.powi(ti);
    let bc2 = 1.0 - cfg.beta2.powi(ti);

    let n = g.len();
    let mut u = Vec::with_capacity(n);
    let mut v_hat = Vec::with_capacity(n);
    for (i, &gi) in g.values().iter().enumerate() {
        let m = cfg.beta1 * state.m_prev[i] + (1.0 - cfg.beta1) * gi;
        let m_hat = m / bc1;
        let v = cfg.beta2 * state.v[i] + (1.0 - cfg.beta2) * gi * gi;
        let vh = v / bc2;
        u.push(m_hat / (vh.sqrt() + cfg.eps));
        v_hat.push(vh);
        state.m_prev[i] = m;
        state.v[i] = v;
    }

    Ok(MomentUpdate {
        u: g.with_values(u)?,
        v_hat: g.with_values(v_hat)?,
    })
}

/// Scalar coefficient `c` such that the decay term equals `c * theta`.
pub fn decay_coefficient(
    theta: &ParamTensor,
    v_hat: &ParamTensor,
    eta_t: f64,
    cfg: &DecayConfig,
) -> Result<f64> {
    theta.expect_same_shape(v_hat)?;
    let mut coef = eta_t * cfg.lambda;
    if cfg.stable_decay_enabled {
        coef /= v_hat.mean().sqrt().max(STABLE_DECAY_FLOOR);
    }
    if cfg.norm_loss_enabled {
        let norm = frobenius_norm(theta);
        if norm == 0.0 {
            return Ok(0.0);
        }
        coef *= 1.0 - 1.0 / norm;
    }
    Ok(coef)
}

/// Norm-loss and stable weight decay combined.
///
/// `eta_t * lambda * (1 - 1/‖θ‖) * θ / sqrt(mean(v_hat))`, where the norm and
/// the mean are taken over the whole tensor. Each factor drops out when its
/// flag is off; an all-zero `theta` yields zero.
pub fn combined_decay(
    theta: &ParamTensor,
    v_hat: &ParamTensor,
    eta_t: f64,
    cfg: &DecayConfig,
) -> Result<ParamTensor> {
    let coef = decay_coefficient(theta, v_hat, eta_t, cfg)?;
    theta.with_values(theta.values().iter().map(|x| coef * x).collect())
}
