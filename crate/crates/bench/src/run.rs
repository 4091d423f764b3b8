use ranger21::problems::{make_blobs, MlpArch, MlpProblem, Objective, Quadratic, Rosenbrock};
use ranger21::{Error, Optimizer};
use rayon::prelude::*;

use crate::config::{ProblemSpec, RunConfig};

/// One logged row of a benchmark curve.
#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub run: usize,
    pub optimizer: String,
    pub step: u64,
    pub eta_t: f64,
    pub loss: f64,
    pub accuracy: Option<f64>,
    pub clip_ratio: Option<f64>,
    pub mean_vhat: f64,
    pub decay_norm: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub run: usize,
    pub optimizer: String,
    pub final_loss: Option<f64>,
    pub best_loss: Option<f64>,
    pub final_accuracy: Option<f64>,
    /// First recorded step whose loss is at or below the configured threshold.
    pub steps_to_threshold: Option<u64>,
    /// Step at which a non-finite loss or update was hit.
    pub diverged_at: Option<u64>,
}

impl RunSummary {
    pub fn diverged(&self) -> bool {
        self.diverged_at.is_some()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkOutput {
    /// Sorted by (optimizer, step).
    pub records: Vec<RunRecord>,
    /// In config order.
    pub summaries: Vec<RunSummary>,
}

impl BenchmarkOutput {
    pub fn all_diverged(&self) -> bool {
        self.summaries.iter().all(RunSummary::diverged)
    }
}

/// Instantiate the configured problem. Datasets default to the run seed.
pub fn build_problem(spec: &ProblemSpec, seed: u64) -> ranger21::Result<Box<dyn Objective>> {
    Ok(match spec {
        ProblemSpec::Rosenbrock { start } => Box::new(Rosenbrock { start: *start }),
        ProblemSpec::Quadratic { spectrum, start } => {
            Box::new(Quadratic::new(spectrum.clone(), start.clone())?)
        }
        ProblemSpec::Mlp {
            widths,
            activation,
            label_smoothing,
            batch_size,
            dataset,
        } => {
            let data = make_blobs(
                dataset.seed.unwrap_or(seed),
                dataset.n,
                dataset.d,
                dataset.classes,
                dataset.separation,
            )?;
            let arch = MlpArch::new(widths.clone(), *activation)?;
            Box::new(MlpProblem::new(
                arch,
                data,
                *label_smoothing,
                *batch_size,
                seed,
            )?)
        }
    })
}

fn is_divergence(e: &Error) -> bool {
    matches!(e, Error::NonFinite { .. })
}

fn run_one(
    cfg: &RunConfig,
    run: usize,
    objective: &dyn Objective,
) -> ranger21::Result<(Vec<RunRecord>, RunSummary)> {
    let spec = &cfg.optimizers[run];
    let params = objective.init_params(cfg.seed)?;
    let mut opt = Optimizer::new(spec.preset, params)?;
    let mut records = Vec::new();
    let mut diverged_at = None;

    for t in 1..=cfg.t_max {
        let eval = match objective.loss_and_grad(opt.params(), t) {
            Ok(e) if e.loss.is_finite() => e,
            Ok(_) => {
                diverged_at = Some(t);
                break;
            }
            Err(e) if is_divergence(&e) => {
                diverged_at = Some(t);
                break;
            }
            Err(e) => return Err(e),
        };
        let report = match opt.step(&eval.grads) {
            Ok(r) => r,
            Err(e) if is_divergence(&e) => {
                diverged_at = Some(t);
                break;
            }
            Err(e) => return Err(e),
        };
        if t % cfg.cadence == 0 || t == cfg.t_max {
            let metrics = objective.metrics(opt.params())?;
            let values = [metrics.loss, report.mean_v_hat(), report.decay_norm()];
            if values.iter().any(|v| !v.is_finite()) {
                diverged_at = Some(t);
                break;
            }
            records.push(RunRecord {
                run,
                optimizer: spec.name.clone(),
                step: t,
                eta_t: report.eta_t,
                loss: metrics.loss,
                accuracy: metrics.accuracy,
                clip_ratio: report.mean_clip_ratio(),
                mean_vhat: report.mean_v_hat(),
                decay_norm: report.decay_norm(),
            });
        }
    }

    let last = records.last();
    let summary = RunSummary {
        run,
        optimizer: spec.name.clone(),
        final_loss: last.map(|r| r.loss),
        best_loss: records.iter().map(|r| r.loss).reduce(f64::min),
        final_accuracy: last.and_then(|r| r.accuracy),
        steps_to_threshold: cfg
            .threshold
            .and_then(|th| records.iter().find(|r| r.loss <= th).map(|r| r.step)),
        diverged_at,
    };
    Ok((records, summary))
}

/// Run every configured optimizer on the same seeded problem.
///
/// Runs execute on the ambient rayon pool; results are assembled in config
/// order and records sorted by (optimizer, step), so output does not depend
/// on the thread count.
pub fn run_benchmark(cfg: &RunConfig) -> ranger21::Result<BenchmarkOutput> {
    let objective = build_problem(&cfg.problem, cfg.seed)?;
    let objective: &dyn Objective = objective.as_ref();
    let results = (0..cfg.optimizers.len())
        .into_par_iter()
        .map(|run| run_one(cfg, run, objective))
        .collect::<ranger21::Result<Vec<_>>>()?;

    let mut records = Vec::new();
    let mut summaries = Vec::with_capacity(results.len());
    for (r, s) in results {
        records.extend(r);
        summaries.push(s);
    }
    records.sort_by(|a, b| a.optimizer.cmp(&b.optimizer).then(a.step.cmp(&b.step)));
    Ok(BenchmarkOutput { records, summaries })
}
