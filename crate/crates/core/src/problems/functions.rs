use crate::error::{Error, Result};
use crate::tensor::ParamTensor;

use super::{Evaluation, Metrics, Objective};

/// `f = (1 - x)^2 + 100 (y - x^2)^2` and its gradient.
pub fn rosenbrock(p: [f64; 2]) -> (f64, [f64; 2]) {
    let [x, y] = p;
    let a = 1.0 - x;
    let b = y - x * x;
    let f = a * a + 100.0 * b * b;
    let gx = -2.0 * a - 400.0 * x * b;
    let gy = 200.0 * b;
    (f, [gx, gy])
}

/// `f = 0.5 * sum(a_i x_i^2)`, gradient `a ∘ x`.
pub fn quadratic(x: &[f64], spectrum: &[f64]) -> (f64, Vec<f64>) {
    let f = 0.5 * x.iter().zip(spectrum).map(|(x, a)| a * x * x).sum::<f64>();
    let g = x.iter().zip(spectrum).map(|(x, a)| a * x).collect();
    (f, g)
}

fn single(params: &[ParamTensor], len: usize) -> Result<&ParamTensor> {
    match params {
        [p] if p.shape() == [len] => Ok(p),
        [p] => Err(Error::ShapeMismatch {
            name: p.name().to_owned(),
            expected: vec![len],
            actual: p.shape().to_vec(),
        }),
        _ => Err(Error::CountMismatch {
            expected: 1,
            actual: params.len(),
        }),
    }
}

/// Rosenbrock's valley as an [`Objective`] over one rank-1 tensor `x`.
#[derive(Debug, Clone, PartialEq)]
pub struct Rosenbrock {
    pub start: [f64; 2],
}

impl Objective for Rosenbrock {
    fn name(&self) -> &str {
        "rosenbrock"
    }

    fn init_params(&self, _seed: u64) -> Result<Vec<ParamTensor>> {
        Ok(vec![ParamTensor::vector("x", &self.start)?])
    }

    fn loss_and_grad(&self, params: &[ParamTensor], _t: u64) -> Result<Evaluation> {
        let x = single(params, 2)?;
        let (f, g) = rosenbrock([x.values()[0], x.values()[1]]);
        Ok(Evaluation {
            loss: f,
            grads: vec![x.with_values(g.to_vec())?],
        })
    }

    fn metrics(&self, params: &[ParamTensor]) -> Result<Metrics> {
        let x = single(params, 2)?;
        Ok(Metrics {
            loss: rosenbrock([x.values()[0], x.values()[1]]).0,
            accuracy: None,
        })
    }
}

/// Diagonal quadratic bowl as an [`Objective`].
#[derive(Debug, Clone, PartialEq)]
pub struct Quadratic {
    pub spectrum: Vec<f64>,
    pub start: Vec<f64>,
}

impl Quadratic {
    pub fn new(spectrum: Vec<f64>, start: Vec<f64>) -> Result<Self> {
        if spectrum.is_empty() || spectrum.len() != start.len() {
            return Err(Error::config(
                "spectrum",
                "must be non-empty and match the start point's length",
            ));
        }
        if spectrum.iter().any(|&a| !(a > 0.0 && a.is_finite())) {
            return Err(Error::config("spectrum", "entries must be positive"));
        }
        Ok(Self { spectrum, start })
    }
}

impl Objective for Quadratic {
    fn name(&self) -> &str {
        "quadratic"
    }

    fn init_params(&self, _seed: u64) -> Result<Vec<ParamTensor>> {
        Ok(vec![ParamTensor::vector("x", &self.start)?])
    }

    fn loss_and_grad(&self, params: &[ParamTensor], _t: u64) -> Result<Evaluation> {
        let x = single(params, self.spectrum.len())?;
        let (f, g) = quadratic(x.values(), &self.spectrum);
        Ok(Evaluation {
            loss: f,
            grads: vec![x.with_values(g)?],
        })
    }

    fn metrics(&self, params: &[ParamTensor]) -> Result<Metrics> {
        let x = single(params, self.spectrum.len())?;
        Ok(Metrics {
            loss: quadratic(x.values(), &self.spectrum).0,
            accuracy: None,
        })
    }
}
