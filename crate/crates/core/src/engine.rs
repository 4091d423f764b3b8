//! Optimizer presets and the step loop.
//!
//! [`adamw_step`] is plain AdamW. [`ranger21_step`] runs the full pipeline:
//! adaptive clipping, centralization, positive-negative momentum, the
//! scheduled learning rate, norm-loss/stable decay and finally lookahead.
//! Every Ranger21 component can be switched off through [`Toggles`]; with all
//! of them off and the schedule pinned to 1 the step is AdamW.
//!
//! [`Optimizer`] bundles a preset with the parameters and state it owns and
//! can be checkpointed and resumed bit-identically.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lookahead::{lookahead_sync, LookaheadState};
use crate::moments::{
    adam_update, combined_decay, pnm_update, DecayConfig, MomentConfig, MomentState, MomentUpdate,
};
use crate::schedule::{
    fraction_of, ScheduleSpec, DEFAULT_WARMDOWN_FRACTION_PCT, DEFAULT_WARMUP_FRACTION_PCT,
};
use crate::tensor::{frobenius_norm, ParamTensor};
use crate::transforms::{
    adaptive_gradient_clip_with_stats, gradient_centralize, ClipConfig, ClipStats,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamWConfig {
    pub lr: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            weight_decay: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl AdamWConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::config("lr", format!("must be > 0, got {}", self.lr)));
        }
        self.moments().validate()?;
        DecayConfig {
            lambda: self.weight_decay,
            norm_loss_enabled: false,
            stable_decay_enabled: false,
        }
        .validate()
    }

    fn moments(&self) -> MomentConfig {
        MomentConfig {
            beta0: 0.0,
            beta1: self.beta1,
            beta2: self.beta2,
            eps: self.eps,
        }
    }
}

/// Per-component switches for a Ranger21 step. All on by default.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Toggles {
    pub agc: bool,
    pub centralization: bool,
    pub pnm: bool,
    pub norm_loss: bool,
    pub stable_decay: bool,
    pub warmup: bool,
    pub warmdown: bool,
    pub lookahead: bool,
}

impl Toggles {
    pub const ALL_ON: Toggles = Toggles {
        agc: true,
        centralization: true,
        pnm: true,
        norm_loss: true,
        stable_decay: true,
        warmup: true,
        warmdown: true,
        lookahead: true,
    };

    pub const ALL_OFF: Toggles = Toggles {
        agc: false,
        centralization: false,
        pnm: false,
        norm_loss: false,
        stable_decay: false,
        warmup: false,
        warmdown: false,
        lookahead: false,
    };
}

impl Default for Toggles {
    fn default() -> Self {
        Self::ALL_ON
    }
}

/// Every Ranger21 hyperparameter plus the component toggles.
///
/// The schedule and decay settings are derived views
/// ([`Ranger21Config::schedule`], [`Ranger21Config::decay`]) so `beta2` and
/// the decay flags have a single source.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ranger21Config {
    pub lr: f64,
    pub t_max: u64,
    pub t_warmup: u64,
    pub t_warmdown: u64,
    pub moments: MomentConfig,
    pub weight_decay: f64,
    pub clip: ClipConfig,
    pub k_lookahead: u64,
    pub beta_lookahead: f64,
    pub toggles: Toggles,
}

impl Ranger21Config {
    /// Default hyperparameters for a run of `t_max` steps.
    pub fn new(lr: f64, t_max: u64) -> Self {
        Self {
            lr,
            t_max,
            t_warmup: fraction_of(t_max, DEFAULT_WARMUP_FRACTION_PCT),
            t_warmdown: fraction_of(t_max, DEFAULT_WARMDOWN_FRACTION_PCT),
            moments: MomentConfig::default(),
            weight_decay: 1e-4,
            clip: ClipConfig::default(),
            k_lookahead: 5,
            beta_lookahead: 0.5,
            toggles: Toggles::ALL_ON,
        }
    }

    pub fn schedule(&self) -> ScheduleSpec {
        ScheduleSpec {
            eta: self.lr,
            beta2: self.moments.beta2,
            t_max: self.t_max,
            t_warmup: self.t_warmup,
            t_warmdown: self.t_warmdown,
        }
    }

    pub fn decay(&self) -> DecayConfig {
        DecayConfig {
            lambda: self.weight_decay,
            norm_loss_enabled: self.toggles.norm_loss,
            stable_decay_enabled: self.toggles.stable_decay,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.schedule().validate()?;
        self.moments.validate()?;
        self.decay().validate()?;
        self.clip.validate()?;
        if self.k_lookahead == 0 {
            return Err(Error::config("k_lookahead", "must be >= 1"));
        }
        if !(0.0..1.0).contains(&self.beta_lookahead) {
            return Err(Error::config(
                "beta_lookahead",
                format!("must be in [0, 1), got {}", self.beta_lookahead),
            ));
        }
        Ok(())
    }

    /// `eta_t` for step `t`, honouring the warm-up/warm-down toggles.
    pub fn lr_at(&self, t: u64) -> Result<f64> {
        let factor =
            self.schedule()
                .lr_factor_with(t, self.toggles.warmup, self.toggles.warmdown)?;
        Ok(factor * self.lr)
    }
}

/// Intermediates of one tensor's update, handed to a [`StepObserver`].
#[derive(Debug)]
pub struct TensorTrace<'a> {
    pub index: usize,
    pub theta: &'a ParamTensor,
    pub grad: &'a ParamTensor,
    pub clipped: &'a ParamTensor,
    pub centralized: &'a ParamTensor,
    pub u: &'a ParamTensor,
    pub v_hat: &'a ParamTensor,
    pub eta_t: f64,
    /// Decay term without the learning rate; the step subtracts `eta_t * decay`.
    pub decay: &'a ParamTensor,
    /// Parameters after the update, before any lookahead sync.
    pub theta_next: &'a ParamTensor,
}

pub trait StepObserver {
    fn observe(&mut self, trace: &TensorTrace<'_>);
}

impl StepObserver for () {
    fn observe(&mut self, _: &TensorTrace<'_>) {}
}

impl<F: FnMut(&TensorTrace<'_>)> StepObserver for F {
    fn observe(&mut self, trace: &TensorTrace<'_>) {
        self(trace)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TensorDiagnostics {
    pub name: String,
    /// `None` when adaptive clipping is disabled.
    pub clip: Option<ClipStats>,
    pub mean_v_hat: f64,
    /// Frobenius norm of the decay displacement `eta_t * d`.
    pub decay_norm: f64,
    pub len: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepReport {
    pub t: u64,
    pub eta_t: f64,
    pub lookahead_synced: bool,
    pub tensors: Vec<TensorDiagnostics>,
}

impl StepReport {
    /// Mean clip ratio over every unit of every tensor, if clipping ran.
    pub fn mean_clip_ratio(&self) -> Option<f64> {
        let mut units = 0usize;
        let mut sum = 0.0;
        for d in &self.tensors {
            let stats = d.clip?;
            units += stats.units;
            sum += stats.ratio_sum;
        }
        (units > 0).then(|| sum / units as f64)
    }

    /// Element-weighted mean of `v_hat` across all tensors.
    pub fn mean_v_hat(&self) -> f64 {
        let n: usize = self.tensors.iter().map(|d| d.len).sum();
        let total: f64 = self
            .tensors
            .iter()
            .map(|d| d.mean_v_hat * d.len as f64)
            .sum();
        if n == 0 {
            0.0
        } else {
            total / n as f64
        }
    }

    /// Norm of the decay displacement over all tensors.
    pub fn decay_norm(&self) -> f64 {
        self.tensors
            .iter()
            .map(|d| d.decay_norm * d.decay_norm)
            .sum::<f64>()
            .sqrt()
    }
}

fn check_aligned(
    params: &[ParamTensor],
    grads: &[ParamTensor],
    state: &[MomentState],
) -> Result<()> {
    if grads.len() != params.len() {
        return Err(Error::CountMismatch {
            expected: params.len(),
            actual: grads.len(),
        });
    }
    if state.len() != params.len() {
        return Err(Error::CountMismatch {
            expected: params.len(),
            actual: state.len(),
        });
    }
    for (p, g) in params.iter().zip(grads) {
        p.expect_same_shape(g)?;
    }
    Ok(())
}

fn apply_update(
    theta: &ParamTensor,
    u: &ParamTensor,
    decay: &ParamTensor,
    eta: f64,
) -> Result<ParamTensor> {
    let values = theta
        .values()
        .iter()
        .zip(u.values())
        .zip(decay.values())
        .map(|((th, u), d)| th - eta * u - eta * d)
        .collect();
    theta.with_values(values)
}

fn commit(params: &mut [ParamTensor], next: Vec<ParamTensor>) {
    for (p, n) in params.iter_mut().zip(next) {
        *p = n;
    }
}

/// One AdamW step: bias-corrected Adam moments and decoupled decay
/// `theta <- theta - lr * u - lr * weight_decay * theta`.
///
/// Parameters are only replaced once every tensor's update has been
/// computed, so an error leaves them untouched. Moment state may be
/// partially advanced on error.
pub fn adamw_step(
    params: &mut [ParamTensor],
    grads: &[ParamTensor],
    state: &mut [MomentState],
    t: u64,
    cfg: &AdamWConfig,
) -> Result<StepReport> {
    check_aligned(params, grads, state)?;
    let moments = cfg.moments();
    let decay_cfg = DecayConfig {
        lambda: cfg.weight_decay,
        norm_loss_enabled: false,
        stable_decay_enabled: false,
    };
    let mut next = Vec::with_capacity(params.len());
    let mut tensors = Vec::with_capacity(params.len());
    for ((theta, g), st) in params.iter().zip(grads).zip(state.iter_mut()) {
        let MomentUpdate { u, v_hat } = adam_update(st, g, t, &moments)?;
        let decay = combined_decay(theta, &v_hat, 1.0, &decay_cfg)?;
        tensors.push(TensorDiagnostics {
            name: theta.name().to_owned(),
            clip: None,
            mean_v_hat: v_hat.mean(),
            decay_norm: cfg.lr * frobenius_norm(&decay),
            len: theta.len(),
        });
        next.push(apply_update(theta, &u, &decay, cfg.lr)?);
    }
    commit(params, next);
    Ok(StepReport {
        t,
        eta_t: cfg.lr,
        lookahead_synced: false,
        tensors,
    })
}

/// Moment buffers and slow weights for a Ranger21 run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ranger21State {
    pub moments: Vec<MomentState>,
    pub lookahead: LookaheadState,
}

impl Ranger21State {
    pub fn new(params: &[ParamTensor]) -> Self {
        Self {
            moments: params.iter().map(MomentState::zeros_like).collect(),
            lookahead: LookaheadState::new(params),
        }
    }
}

/// One Ranger21 step at 1-based step `t`.
///
/// The decay term is scaled by `eta_t` exactly once:
/// `theta <- theta - eta_t * u - eta_t * d` with
/// `d = lambda * (1 - 1/‖θ‖) * θ / sqrt(mean(v_hat))`.
pub fn ranger21_step(
    params: &mut [ParamTensor],
    grads: &[ParamTensor],
    state: &mut Ranger21State,
    t: u64,
    cfg: &Ranger21Config,
    observer: &mut dyn StepObserver,
) -> Result<StepReport> {
    check_aligned(params, grads, &state.moments)?;
    let eta_t = cfg.lr_at(t)?;
    let decay_cfg = cfg.decay();
    let toggles = cfg.toggles;

    let mut next = Vec::with_capacity(params.len());
    let mut tensors = Vec::with_capacity(params.len());
    for (index, ((theta, g), st)) in params
        .iter()
        .zip(grads)
        .zip(state.moments.iter_mut())
        .enumerate()
    {
        let (clipped, clip) = if toggles.agc {
            let (c, stats) = adaptive_gradient_clip_with_stats(g, theta, &cfg.clip)?;
            (c, Some(stats))
        } else {
            (g.clone(), None)
        };
        let centralized = if toggles.centralization {
            gradient_centralize(&clipped)
        } else {
            clipped.clone()
        };
        let MomentUpdate { u, v_hat } = if toggles.pnm {
            pnm_update(st, &centralized, t, &cfg.moments)?
        } else {
            adam_update(st, &centralized, t, &cfg.moments)?
        };
        let decay = combined_decay(theta, &v_hat, 1.0, &decay_cfg)?;
        let theta_next = apply_update(theta, &u, &decay, eta_t)?;
        observer.observe(&TensorTrace {
            index,
            theta,
            grad: g,
            clipped: &clipped,
            centralized: &centralized,
            u: &u,
            v_hat: &v_hat,
            eta_t,
            decay: &decay,
            theta_next: &theta_next,
        });
        tensors.push(TensorDiagnostics {
            name: theta.name().to_owned(),
            clip,
            mean_v_hat: v_hat.mean(),
            decay_norm: eta_t * frobenius_norm(&decay),
            len: theta.len(),
        });
        next.push(theta_next);
    }
    commit(params, next);

    let lookahead_synced = if toggles.lookahead {
        lookahead_sync(
            params,
            &mut state.lookahead,
            t,
            cfg.k_lookahead,
            cfg.beta_lookahead,
        )?
    } else {
        false
    };

    Ok(StepReport {
        t,
        eta_t,
        lookahead_synced,
        tensors,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "preset", rename_all = "lowercase")]
pub enum Preset {
    AdamW(AdamWConfig),
    Ranger21(Ranger21Config),
}

impl Preset {
    pub fn validate(&self) -> Result<()> {
        match self {
            Preset::AdamW(c) => c.validate(),
            Preset::Ranger21(c) => c.validate(),
        }
    }

    /// Number of steps the preset can take, if bounded.
    pub fn t_max(&self) -> Option<u64> {
        match self {
            Preset::AdamW(_) => None,
            Preset::Ranger21(c) => Some(c.t_max),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
enum PresetState {
    AdamW(Vec<MomentState>),
    Ranger21(Ranger21State),
}

pub const CHECKPOINT_VERSION: u32 = 1;

/// A preset together with the parameters and optimizer state it owns.
///
/// Parameter order is registration order and is preserved throughout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Optimizer {
    version: u32,
    preset: Preset,
    step: u64,
    params: Vec<ParamTensor>,
    state: PresetState,
}

impl Optimizer {
    pub fn new(preset: Preset, params: Vec<ParamTensor>) -> Result<Self> {
        preset.validate()?;
        let state = match &preset {
            Preset::AdamW(_) => {
                PresetState::AdamW(params.iter().map(MomentState::zeros_like).collect())
            }
            Preset::Ranger21(_) => PresetState::Ranger21(Ranger21State::new(&params)),
        };
        Ok(Self {
            version: CHECKPOINT_VERSION,
            preset,
            step: 0,
            params,
            state,
        })
    }

    pub fn preset(&self) -> &Preset {
        &self.preset
    }

    pub fn params(&self) -> &[ParamTensor] {
        &self.params
    }

    /// Number of steps taken so far.
    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn step(&mut self, grads: &[ParamTensor]) -> Result<StepReport> {
        self.step_observed(grads, &mut ())
    }

    pub fn step_observed(
        &mut self,
        grads: &[ParamTensor],
        observer: &mut dyn StepObserver,
    ) -> Result<StepReport> {
        let t = self.step + 1;
        let report = match (&self.preset, &mut self.state) {
            (Preset::AdamW(cfg), PresetState::AdamW(moments)) => {
                adamw_step(&mut self.params, grads, moments, t, cfg)?
            }
            (Preset::Ranger21(cfg), PresetState::Ranger21(state)) => {
                ranger21_step(&mut self.params, grads, state, t, cfg, observer)?
            }
            _ => unreachable!("state variant always matches the preset"),
        };
        self.step = t;
        Ok(report)
    }

    pub fn save_checkpoint<W: Write>(&self, writer: W) -> Result<()> {
        serde_json::to_writer(writer, self).map_err(|e| Error::Checkpoint(e.to_string()))
    }

    pub fn load_checkpoint<R: Read>(reader: R) -> Result<Self> {
        let opt: Optimizer =
            serde_json::from_reader(reader).map_err(|e| Error::Checkpoint(e.to_string()))?;
        opt.check_loaded()?;
        Ok(opt)
    }

    fn check_loaded(&self) -> Result<()> {
        if self.version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported version {}",
                self.version
            )));
        }
        self.preset.validate()?;
        let moments = match (&self.preset, &self.state) {
            (Preset::AdamW(_), PresetState::AdamW(m)) => m,
            (Preset::Ranger21(_), PresetState::Ranger21(s)) => {
                s.lookahead.check_matches(&self.params)?;
                &s.moments
            }
            _ => return Err(Error::Checkpoint("state does not match preset".into())),
        };
        if moments.len() != self.params.len() {
            return Err(Error::Checkpoint(
                "moment count does not match parameters".into(),
            ));
        }
        for (m, p) in moments.iter().zip(&self.params) {
            m.check_consistent()?;
            if m.shape() != p.shape() {
                return Err(Error::Checkpoint(format!(
                    "moment shape for `{}` does not match",
                    p.name()
                )));
            }
        }
        Ok(())
    }
}
