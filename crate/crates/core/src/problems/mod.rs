//! Desk-scale differentiable problems used to exercise the optimizers.

mod data;
mod finite_diff;
mod functions;
mod loss;
mod mlp;

pub use data::{make_blobs, seeded_rng, Dataset};
pub use finite_diff::finite_diff_grad;
pub use functions::{quadratic, rosenbrock, Quadratic, Rosenbrock};
pub use loss::label_smoothed_ce;
pub use mlp::{init_mlp_params, mlp_eval, Activation, MlpArch, MlpEval, MlpProblem};

use crate::error::Result;
use crate::tensor::ParamTensor;

/// Loss and gradient for one optimizer step.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub loss: f64,
    pub grads: Vec<ParamTensor>,
}

/// Full-objective metrics used for reporting.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Metrics {
    pub loss: f64,
    /// Fraction of correctly classified samples, for classification problems.
    pub accuracy: Option<f64>,
}

/// A differentiable objective over an ordered list of named tensors.
pub trait Objective: Send + Sync {
    fn name(&self) -> &str;

    /// Starting parameters. Problems with random initialization draw from `seed`.
    fn init_params(&self, seed: u64) -> Result<Vec<ParamTensor>>;

    /// Loss and gradient for 1-based step `t`. Stochastic problems pick the
    /// minibatch for `t` deterministically.
    fn loss_and_grad(&self, params: &[ParamTensor], t: u64) -> Result<Evaluation>;

    /// Loss (and accuracy where meaningful) over the whole objective.
    fn metrics(&self, params: &[ParamTensor]) -> Result<Metrics>;
}
