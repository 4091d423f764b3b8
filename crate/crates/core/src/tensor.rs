//! Dense row-major tensors of `f64` with the handful of reductions the
//! optimizer components need.
//!
//! A "row" (or unit) is a dim-0 slice with every remaining axis flattened.
//! For a rank-1 tensor each element is its own row.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A named dense tensor holding one layer's parameters or gradient.
///
/// Invariants enforced at construction: the shape is non-empty with every
/// extent at least 1, the value count equals the product of the extents, and
/// every value is finite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawTensor")]
pub struct ParamTensor {
    name: String,
    shape: Vec<usize>,
    values: Vec<f64>,
}

#[derive(Deserialize)]
struct RawTensor {
    name: String,
    shape: Vec<usize>,
    values: Vec<f64>,
}

impl TryFrom<RawTensor> for ParamTensor {
    type Error = Error;

    fn try_from(raw: RawTensor) -> Result<Self> {
        ParamTensor::new(raw.name, raw.shape, raw.values)
    }
}

impl ParamTensor {
    pub fn new(name: impl Into<String>, shape: Vec<usize>, values: Vec<f64>) -> Result<Self> {
        let name = name.into();
        if shape.is_empty() || shape.contains(&0) {
            return Err(Error::InvalidShape { name, shape });
        }
        let expected: usize = shape.iter().product();
        if expected != values.len() {
            return Err(Error::LengthMismatch {
                name,
                shape,
                expected,
                actual: values.len(),
            });
        }
        check_finite(&name, &values)?;
        Ok(Self {
            name,
            shape,
            values,
        })
    }

    pub fn zeros(name: impl Into<String>, shape: Vec<usize>) -> Result<Self> {
        let len = shape.iter().product();
        Self::new(name, shape, vec![0.0; len])
    }

    pub fn filled(name: impl Into<String>, shape: Vec<usize>, value: f64) -> Result<Self> {
        let len = shape.iter().product();
        Self::new(name, shape, vec![value; len])
    }

    /// Rank-1 tensor from a slice.
    pub fn vector(name: impl Into<String>, values: &[f64]) -> Result<Self> {
        Self::new(name, vec![values.len()], values.to_vec())
    }

    pub fn scalar(name: impl Into<String>, value: f64) -> Result<Self> {
        Self::new(name, vec![1], vec![value])
    }

    /// A zero tensor with the same name and shape.
    pub fn zeros_like(&self) -> Self {
        Self {
            name: self.name.clone(),
            shape: self.shape.clone(),
            values: vec![0.0; self.values.len()],
        }
    }

    /// Same name and shape, new values. Fails on length mismatch or
    /// non-finite input.
    pub fn with_values(&self, values: Vec<f64>) -> Result<Self> {
        if values.len() != self.values.len() {
            return Err(Error::LengthMismatch {
                name: self.name.clone(),
                shape: self.shape.clone(),
                expected: self.values.len(),
                actual: values.len(),
            });
        }
        check_finite(&self.name, &values)?;
        Ok(Self {
            name: self.name.clone(),
            shape: self.shape.clone(),
            values,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Number of dim-0 slices.
    pub fn rows(&self) -> usize {
        self.shape[0]
    }

    /// Number of values per dim-0 slice.
    pub fn row_len(&self) -> usize {
        self.values.len() / self.shape[0]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let w = self.row_len();
        &self.values[i * w..(i + 1) * w]
    }

    /// Reinterpret the flat values under a new shape with the same element count.
    pub fn reshape(&self, shape: Vec<usize>) -> Result<Self> {
        Self::new(self.name.clone(), shape, self.values.clone())
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    pub fn dot(&self, other: &ParamTensor) -> Result<f64> {
        self.expect_same_shape(other)?;
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a * b)
            .sum())
    }

    pub fn expect_same_shape(&self, other: &ParamTensor) -> Result<()> {
        if self.shape != other.shape {
            return Err(Error::ShapeMismatch {
                name: self.name.clone(),
                expected: self.shape.clone(),
                actual: other.shape.clone(),
            });
        }
        Ok(())
    }
}

pub(crate) fn check_finite(name: &str, values: &[f64]) -> Result<()> {
    match values.iter().position(|v| !v.is_finite()) {
        Some(index) => Err(Error::NonFinite {
            name: name.to_owned(),
            index,
            value: values[index],
        }),
        None => Ok(()),
    }
}

fn l2(values: &[f64]) -> f64 {
    values.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Frobenius norm over every value of the tensor.
pub fn frobenius_norm(t: &ParamTensor) -> f64 {
    l2(&t.values)
}

/// Frobenius norm of each dim-0 slice.
pub fn row_norms(t: &ParamTensor) -> Vec<f64> {
    t.values.chunks_exact(t.row_len()).map(l2).collect()
}

/// Arithmetic mean of each dim-0 slice. Only defined for rank >= 2.
pub fn mean_all_but_first(t: &ParamTensor) -> Result<Vec<f64>> {
    if t.rank() < 2 {
        return Err(Error::RankTooLow {
            name: t.name.clone(),
            rank: t.rank(),
            min_rank: 2,
        });
    }
    let w = t.row_len();
    Ok(t.values
        .chunks_exact(w)
        .map(|row| row.iter().sum::<f64>() / w as f64)
        .collect())
}
