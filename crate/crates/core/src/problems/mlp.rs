//! Fully connected networks with a hand-written backward pass.
//!
//! Parameters are ordered `layer0.weight, layer0.bias, layer1.weight, ...`
//! with weights shaped `[fan_out, fan_in]`. Hidden layers apply the chosen
//! activation; the last layer produces logits for a label-smoothed softmax
//! cross-entropy averaged over the batch. There is no normalization layer.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::ParamTensor;

use super::data::{seeded_rng, Dataset};
use super::loss::label_smoothed_ce;
use super::{Evaluation, Metrics, Objective};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Tanh,
    Relu,
}

impl Activation {
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Tanh => z.tanh(),
            Activation::Relu => z.max(0.0),
        }
    }

    /// Derivative expressed through the pre-activation and activation.
    fn derivative(self, z: f64, a: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - a * a,
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpArch {
    /// Layer widths from input to output; at least two entries.
    pub widths: Vec<usize>,
    pub activation: Activation,
}

impl MlpArch {
    pub fn new(widths: Vec<usize>, activation: Activation) -> Result<Self> {
        if widths.len() < 2 || widths.contains(&0) {
            return Err(Error::config(
                "widths",
                "need at least input and output widths, all >= 1",
            ));
        }
        if *widths.last().unwrap() < 2 {
            return Err(Error::config("widths", "output width must be >= 2 classes"));
        }
        Ok(Self { widths, activation })
    }

    pub fn layers(&self) -> usize {
        self.widths.len() - 1
    }

    pub fn input_dim(&self) -> usize {
        self.widths[0]
    }

    pub fn classes(&self) -> usize {
        *self.widths.last().unwrap()
    }

    pub fn param_shapes(&self) -> Vec<(String, Vec<usize>)> {
        (0..self.layers())
            .flat_map(|l| {
                let (fan_in, fan_out) = (self.widths[l], self.widths[l + 1]);
                [
                    (format!("layer{l}.weight"), vec![fan_out, fan_in]),
                    (format!("layer{l}.bias"), vec![fan_out]),
                ]
            })
            .collect()
    }

    fn check_params(&self, params: &[ParamTensor]) -> Result<()> {
        let shapes = self.param_shapes();
        if params.len() != shapes.len() {
            return Err(Error::CountMismatch {
                expected: shapes.len(),
                actual: params.len(),
            });
        }
        for (p, (name, shape)) in params.iter().zip(shapes) {
            if p.shape() != shape.as_slice() {
                return Err(Error::ShapeMismatch {
                    name,
                    expected: shape,
                    actual: p.shape().to_vec(),
                });
            }
        }
        Ok(())
    }
}

/// Weights and biases drawn uniformly from `[-1/sqrt(fan_in), 1/sqrt(fan_in)]`.
pub fn init_mlp_params(arch: &MlpArch, seed: u64) -> Result<Vec<ParamTensor>> {
    let mut rng = seeded_rng(seed);
    let mut params = Vec::with_capacity(2 * arch.layers());
    for l in 0..arch.layers() {
        let (fan_in, fan_out) = (arch.widths[l], arch.widths[l + 1]);
        let bound = 1.0 / (fan_in as f64).sqrt();
        let mut draw =
            |n: usize| -> Vec<f64> { (0..n).map(|_| rng.gen_range(-bound..=bound)).collect() };
        let weight = draw(fan_out * fan_in);
        let bias = draw(fan_out);
        params.push(ParamTensor::new(
            format!("layer{l}.weight"),
            vec![fan_out, fan_in],
            weight,
        )?);
        params.push(ParamTensor::new(
            format!("layer{l}.bias"),
            vec![fan_out],
            bias,
        )?);
    }
    Ok(params)
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpEval {
    /// Mean label-smoothed cross-entropy over the batch.
    pub loss: f64,
    pub grads: Vec<ParamTensor>,
    /// Samples whose arg-max logit equals the label.
    pub correct: usize,
}

/// Forward and backward pass over a batch of row-major `inputs`.
pub fn mlp_eval(
    params: &[ParamTensor],
    inputs: &[f64],
    labels: &[usize],
    arch: &MlpArch,
    label_smoothing: f64,
) -> Result<MlpEval> {
    arch.check_params(params)?;
    let d = arch.input_dim();
    if labels.is_empty() || inputs.len() != labels.len() * d {
        return Err(Error::ShapeMismatch {
            name: "batch".into(),
            expected: vec![labels.len(), d],
            actual: vec![inputs.len()],
        });
    }
    let layers = arch.layers();
    let batch = labels.len();
    let scale = 1.0 / batch as f64;

    let mut grad_values: Vec<Vec<f64>> = params.iter().map(|p| vec![0.0; p.len()]).collect();
    let mut loss = 0.0;
    let mut correct = 0;

    // Per-layer pre-activations and activations for one sample.
    let mut pre: Vec<Vec<f64>> = arch.widths.iter().map(|&w| vec![0.0; w]).collect();
    let mut act: Vec<Vec<f64>> = pre.clone();

    for (s, &label) in labels.iter().enumerate() {
        act[0].copy_from_slice(&inputs[s * d..(s + 1) * d]);
        for l in 0..layers {
            let w = params[2 * l].values();
            let b = params[2 * l + 1].values();
            let (fan_in, fan_out) = (arch.widths[l], arch.widths[l + 1]);
            let (lower, upper) = act.split_at_mut(l + 1);
            let a_in = &lower[l];
            for o in 0..fan_out {
                let row = &w[o * fan_in..(o + 1) * fan_in];
                let z = b[o] + row.iter().zip(a_in).map(|(w, a)| w * a).sum::<f64>();
                pre[l + 1][o] = z;
                upper[0][o] = if l + 1 == layers {
                    z
                } else {
                    arch.activation.apply(z)
                };
            }
        }

        let logits = &act[layers];
        let (sample_loss, mut delta) = label_smoothed_ce(logits, label, label_smoothing)?;
        loss += sample_loss;
        let arg_max = logits
            .iter()
            .enumerate()
            .fold(0, |best, (i, &z)| if z > logits[best] { i } else { best });
        if arg_max == label {
            correct += 1;
        }

        for l in (0..layers).rev() {
            let (fan_in, fan_out) = (arch.widths[l], arch.widths[l + 1]);
            let a_in = &act[l];
            {
                let gw = &mut grad_values[2 * l];
                for o in 0..fan_out {
                    let dz = delta[o] * scale;
                    for (g, a) in gw[o * fan_in..(o + 1) * fan_in].iter_mut().zip(a_in) {
                        *g += dz * a;
                    }
                }
            }
            for (g, dz) in grad_values[2 * l + 1].iter_mut().zip(&delta) {
                *g += dz * scale;
            }
            if l > 0 {
                let w = params[2 * l].values();
                let mut next = vec![0.0; fan_in];
                for o in 0..fan_out {
                    let row = &w[o * fan_in..(o + 1) * fan_in];
                    for (n, w) in next.iter_mut().zip(row) {
                        *n += w * delta[o];
                    }
                }
                for (i, n) in next.iter_mut().enumerate() {
                    *n *= arch.activation.derivative(pre[l][i], act[l][i]);
                }
                delta = next;
            }
        }
    }

    let grads = params
        .iter()
        .zip(grad_values)
        .map(|(p, g)| p.with_values(g))
        .collect::<Result<Vec<_>>>()?;
    Ok(MlpEval {
        loss: loss * scale,
        grads,
        correct,
    })
}

/// An MLP trained on a fixed dataset with seeded minibatches.
///
/// Each epoch visits every sample once in an order drawn from
/// `(batch_seed, epoch)`; step `t` uses the `((t - 1) mod steps_per_epoch)`-th
/// slice of that order. A `batch_size` of 0 or at least `n` means full batch.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpProblem {
    pub arch: MlpArch,
    pub data: Dataset,
    pub label_smoothing: f64,
    pub batch_size: usize,
    pub batch_seed: u64,
}

impl MlpProblem {
    pub fn new(
        arch: MlpArch,
        data: Dataset,
        label_smoothing: f64,
        batch_size: usize,
        batch_seed: u64,
    ) -> Result<Self> {
        if arch.input_dim() != data.d {
            return Err(Error::config(
                "widths",
                format!(
                    "input width {} does not match dataset dimension {}",
                    arch.input_dim(),
                    data.d
                ),
            ));
        }
        if arch.classes() < data.classes {
            return Err(Error::config(
                "widths",
                format!(
                    "output width {} is smaller than the {} dataset classes",
                    arch.classes(),
                    data.classes
                ),
            ));
        }
        if !(0.0..1.0).contains(&label_smoothing) {
            return Err(Error::config("label_smoothing", "must be in [0, 1)"));
        }
        Ok(Self {
            arch,
            data,
            label_smoothing,
            batch_size,
            batch_seed,
        })
    }

    fn effective_batch(&self) -> usize {
        if self.batch_size == 0 || self.batch_size >= self.data.n {
            self.data.n
        } else {
            self.batch_size
        }
    }

    /// Sample indices used at 1-based step `t`.
    pub fn batch_indices(&self, t: u64) -> Vec<usize> {
        let n = self.data.n;
        let bs = self.effective_batch();
        if bs == n {
            return (0..n).collect();
        }
        let per_epoch = n.div_ceil(bs) as u64;
        let epoch = (t.max(1) - 1) / per_epoch;
        let pos = ((t.max(1) - 1) % per_epoch) as usize;
        let mut rng = seeded_rng(self.batch_seed);
        rng.set_stream(epoch);
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut rng);
        order[pos * bs..((pos + 1) * bs).min(n)].to_vec()
    }

    fn eval_indices(&self, params: &[ParamTensor], indices: &[usize]) -> Result<MlpEval> {
        let d = self.data.d;
        let mut inputs = Vec::with_capacity(indices.len() * d);
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            inputs.extend_from_slice(self.data.sample(i));
            labels.push(self.data.labels[i]);
        }
        mlp_eval(params, &inputs, &labels, &self.arch, self.label_smoothing)
    }
}

impl Objective for MlpProblem {
    fn name(&self) -> &str {
        "mlp"
    }

    fn init_params(&self, seed: u64) -> Result<Vec<ParamTensor>> {
        init_mlp_params(&self.arch, seed)
    }

    fn loss_and_grad(&self, params: &[ParamTensor], t: u64) -> Result<Evaluation> {
        let eval = self.eval_indices(params, &self.batch_indices(t))?;
        Ok(Evaluation {
            loss: eval.loss,
            grads: eval.grads,
        })
    }

    fn metrics(&self, params: &[ParamTensor]) -> Result<Metrics> {
        let eval = mlp_eval(
            params,
            &self.data.inputs,
            &self.data.labels,
            &self.arch,
            self.label_smoothing,
        )?;
        Ok(Metrics {
            loss: eval.loss,
            accuracy: Some(eval.correct as f64 / self.data.n as f64),
        })
    }
}
