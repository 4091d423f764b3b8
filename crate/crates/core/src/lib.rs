//! Composable optimizer components: adaptive gradient clipping, gradient
//! centralization, positive-negative momentum with a max second moment,
//! norm-loss and stable weight decay, a warm-up/flat/warm-down learning-rate
//! schedule and lookahead, assembled into AdamW and Ranger21 presets.
//!
//! Everything operates on [`ParamTensor`], a small dense `f64` tensor.

pub mod engine;
pub mod error;
pub mod lookahead;
pub mod moments;
pub mod problems;
pub mod schedule;
pub mod tensor;
pub mod transforms;

pub use engine::{
    adamw_step, ranger21_step, AdamWConfig, Optimizer, Preset, Ranger21Config, Ranger21State,
    StepObserver, StepReport, TensorDiagnostics, TensorTrace, Toggles,
};
pub use error::{Error, Result};
pub use lookahead::{lookahead_sync, LookaheadState};
pub use moments::{
    adam_update, combined_decay, pnm_update, DecayConfig, MomentConfig, MomentState,
};
pub use schedule::ScheduleSpec;
pub use tensor::{frobenius_norm, mean_all_but_first, row_norms, ParamTensor};
pub use transforms::{
    adaptive_gradient_clip, gradient_centralize, threshold_clip_oracle, ClipConfig,
};
