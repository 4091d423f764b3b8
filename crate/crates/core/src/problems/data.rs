//! Seeded synthetic classification data.
//!
//! All randomness comes from ChaCha8 (`rand_chacha::ChaCha8Rng`) seeded with
//! `seed_from_u64`, so datasets and initial weights regenerate bit-identically
//! from their seed on any platform.

use std::io::{Read, Write};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};

pub fn seeded_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// `n` samples of dimension `d` stored row-major, with integer labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub n: usize,
    pub d: usize,
    pub classes: usize,
    pub inputs: Vec<f64>,
    pub labels: Vec<usize>,
    /// Generator seed; `None` for imported data.
    pub seed: Option<u64>,
}

impl Dataset {
    pub fn sample(&self, i: usize) -> &[f64] {
        &self.inputs[i * self.d..(i + 1) * self.d]
    }

    /// Writes `x0,..,x{d-1},label` CSV.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header: Vec<String> = (0..self.d).map(|j| format!("x{j}")).collect();
        header.push("label".into());
        w.write_record(&header).map_err(csv_err)?;
        for i in 0..self.n {
            let mut row: Vec<String> = self.sample(i).iter().map(|v| v.to_string()).collect();
            row.push(self.labels[i].to_string());
            w.write_record(&row).map_err(csv_err)?;
        }
        w.flush().map_err(|e| Error::Dataset(e.to_string()))
    }

    /// Reads CSV written by [`Dataset::write_csv`]. The class count is
    /// taken as one more than the largest label.
    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut r = csv::Reader::from_reader(reader);
        let header = r.headers().map_err(csv_err)?.clone();
        let d = header
            .len()
            .checked_sub(1)
            .filter(|&d| d > 0)
            .ok_or_else(|| {
                Error::Dataset("header must list at least one feature and a label".into())
            })?;
        for (j, name) in header.iter().take(d).enumerate() {
            if name != format!("x{j}") {
                return Err(Error::Dataset(format!(
                    "column {j}: expected `x{j}`, found `{name}`"
                )));
            }
        }
        if &header[d] != "label" {
            return Err(Error::Dataset(format!(
                "last column must be `label`, found `{}`",
                &header[d]
            )));
        }
        let mut inputs = Vec::new();
        let mut labels = Vec::new();
        for (row, record) in r.records().enumerate() {
            let record = record.map_err(csv_err)?;
            let line = row + 2;
            for j in 0..d {
                let v: f64 = record[j]
                    .parse()
                    .map_err(|e| Error::Dataset(format!("line {line}, column x{j}: {e}")))?;
                if !v.is_finite() {
                    return Err(Error::Dataset(format!(
                        "line {line}, column x{j}: non-finite"
                    )));
                }
                inputs.push(v);
            }
            labels.push(
                record[d]
                    .parse()
                    .map_err(|e| Error::Dataset(format!("line {line}, column label: {e}")))?,
            );
        }
        if labels.is_empty() {
            return Err(Error::Dataset("no samples".into()));
        }
        let classes = labels.iter().max().map_or(0, |m| m + 1).max(2);
        Ok(Self {
            n: labels.len(),
            d,
            classes,
            inputs,
            labels,
            seed: None,
        })
    }
}

fn csv_err(e: csv::Error) -> Error {
    Error::Dataset(e.to_string())
}

/// Gaussian class clusters with unit variance.
///
/// Each class centre is a random unit direction scaled by `separation`.
/// Sample `i` belongs to class `i % classes`, so class sizes differ by at
/// most one.
pub fn make_blobs(
    seed: u64,
    n: usize,
    d: usize,
    classes: usize,
    separation: f64,
) -> Result<Dataset> {
    if classes < 2 || n < classes {
        return Err(Error::config(
            "classes",
            format!("need n >= classes >= 2, got n = {n}, classes = {classes}"),
        ));
    }
    if d == 0 {
        return Err(Error::config("d", "must be >= 1"));
    }
    if !(separation >= 0.0 && separation.is_finite()) {
        return Err(Error::config("separation", "must be finite and >= 0"));
    }
    let mut rng = seeded_rng(seed);
    let mut centres = Vec::with_capacity(classes * d);
    for _ in 0..classes {
        let dir: Vec<f64> = (0..d).map(|_| StandardNormal.sample(&mut rng)).collect();
        let norm = dir.iter().map(|x| x * x).sum::<f64>().sqrt();
        centres.extend(dir.iter().map(|x| separation * x / norm));
    }
    let mut inputs = Vec::with_capacity(n * d);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let c = i % classes;
        for j in 0..d {
            let noise: f64 = StandardNormal.sample(&mut rng);
            inputs.push(centres[c * d + j] + noise);
        }
        labels.push(c);
    }
    Ok(Dataset {
        n,
        d,
        classes,
        inputs,
        labels,
        seed: Some(seed),
    })
}
