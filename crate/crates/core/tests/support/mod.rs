//! Scalar reference transcriptions shared by the integration tests.
//!
//! Everything here is written from the algorithm listings directly, one
//! scalar at a time, without calling into the library.

#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale == 0.0 {
        0.0
    } else {
        (a - b).abs() / scale
    }
}

pub fn max_rel_err(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(x, y)| rel_err(*x, *y))
        .fold(0.0, f64::max)
}

pub fn uniform_vec(rng: &mut ChaCha8Rng, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(lo..hi)).collect()
}

/// AdamW on one scalar.
pub struct ScalarAdamW {
    pub eta: f64,
    pub lambda: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: f64,
    v: f64,
    t: i32,
}

impl ScalarAdamW {
    pub fn new(eta: f64, lambda: f64, beta1: f64, beta2: f64, eps: f64) -> Self {
        Self {
            eta,
            lambda,
            beta1,
            beta2,
            eps,
            m: 0.0,
            v: 0.0,
            t: 0,
        }
    }

    pub fn step(&mut self, theta: f64, g: f64) -> f64 {
        self.t += 1;
        self.m = self.beta1 * self.m + (1.0 - self.beta1) * g;
        let m_hat = self.m / (1.0 - self.beta1.powi(self.t));
        self.v = self.beta2 * self.v + (1.0 - self.beta2) * g * g;
        let v_hat = self.v / (1.0 - self.beta2.powi(self.t));
        let u = m_hat / (v_hat.sqrt() + self.eps);
        let d = self.lambda * theta;
        theta - self.eta * u - self.eta * d
    }
}

/// Positive-negative momentum with a running max second moment, on one scalar.
pub struct ScalarPnm {
    pub beta0: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m1: f64,
    m2: f64,
    v: f64,
    v_max: f64,
    t: i32,
}

impl ScalarPnm {
    pub fn new(beta0: f64, beta1: f64, beta2: f64, eps: f64) -> Self {
        Self {
            beta0,
            beta1,
            beta2,
            eps,
            m1: 0.0,
            m2: 0.0,
            v: 0.0,
            v_max: 0.0,
            t: 0,
        }
    }

    /// Returns `(u, v_hat)`.
    pub fn step(&mut self, g: f64) -> (f64, f64) {
        self.t += 1;
        let b1sq = self.beta1 * self.beta1;
        let m = b1sq * self.m2 + (1.0 - b1sq) * g;
        let m_hat =
            ((1.0 + self.beta0) * m - self.beta0 * self.m1) / (1.0 - self.beta1.powi(self.t));
        self.v = self.beta2 * self.v + (1.0 - self.beta2) * g * g;
        self.v_max = self.v_max.max(self.v);
        let v_hat = self.v_max / (1.0 - self.beta2.powi(self.t));
        let norm = ((1.0 + self.beta0).powi(2) + self.beta0.powi(2)).sqrt();
        let u = m_hat / (norm * (v_hat.sqrt() + self.eps));
        self.m2 = self.m1;
        self.m1 = m;
        (u, v_hat)
    }
}

use ranger21::{
    adaptive_gradient_clip, frobenius_norm, gradient_centralize, mean_all_but_first, row_norms,
    ClipConfig, ParamTensor,
};

/// A random tensor of rank 1 to 4 with a mix of scales, including rows
/// that are exactly zero and rows below the clipping floor.
pub fn random_tensor(rng: &mut ChaCha8Rng, name: &str) -> ParamTensor {
    let rank = rng.gen_range(1..=4);
    let shape: Vec<usize> = (0..rank).map(|_| rng.gen_range(1..=5)).collect();
    let n: usize = shape.iter().product();
    let scale = 10f64.powf(rng.gen_range(-5.0..1.0));
    let mut values = uniform_vec(rng, n, -scale, scale);
    if rng.gen_bool(0.1) {
        let row = n / shape[0];
        values[..row].iter_mut().for_each(|v| *v = 0.0);
    }
    ParamTensor::new(name, shape, values).unwrap()
}

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    dot / (na * nb)
}

/// Check the clipping and centralization invariants on `count` random
/// (parameter, gradient) pairs.
pub fn transform_invariants(count: usize, seed: u64) -> Result<(), String> {
    let cfg = ClipConfig::default();
    let mut r = rng(seed);
    for i in 0..count {
        let theta = random_tensor(&mut r, "theta");
        let gscale = 10f64.powf(r.gen_range(-4.0..2.0));
        let g = theta
            .with_values(uniform_vec(&mut r, theta.len(), -gscale, gscale))
            .unwrap();
        let clipped = adaptive_gradient_clip(&g, &theta, &cfg).map_err(|e| e.to_string())?;

        let th_norms = row_norms(&theta);
        for (row, (&gn, &tn)) in row_norms(&clipped).iter().zip(&th_norms).enumerate() {
            if gn / tn.max(cfg.eps_clipping) > cfg.tau * (1.0 + 1e-12) {
                return Err(format!("tensor {i} row {row}: ratio bound violated"));
            }
        }
        for row in 0..g.rows() {
            if row_norms(&g)[row] > 0.0 {
                let c = cosine(g.row(row), clipped.row(row));
                if (c - 1.0).abs() > 1e-12 {
                    return Err(format!("tensor {i} row {row}: cosine {c}"));
                }
            }
        }
        let twice = adaptive_gradient_clip(&clipped, &theta, &cfg).map_err(|e| e.to_string())?;
        for (a, b) in twice.values().iter().zip(clipped.values()) {
            if (a - b).abs() > 1e-15 * b.abs().max(f64::MIN_POSITIVE) {
                return Err(format!(
                    "tensor {i}: clipping is not idempotent ({a} vs {b})"
                ));
            }
        }

        let gc = gradient_centralize(&g);
        if g.rank() == 1 {
            if gc != g {
                return Err(format!("tensor {i}: rank-1 gradient was centralized"));
            }
            continue;
        }
        let means = mean_all_but_first(&gc).map_err(|e| e.to_string())?;
        if let Some(m) = means.iter().find(|m| m.abs() > 1e-12) {
            return Err(format!("tensor {i}: centralized row mean {m}"));
        }
        let gc2 = gradient_centralize(&gc);
        let tol = 1e-12 * frobenius_norm(&g).max(1.0);
        if gc2
            .values()
            .iter()
            .zip(gc.values())
            .any(|(a, b)| (a - b).abs() > tol)
        {
            return Err(format!("tensor {i}: centralization is not idempotent"));
        }
        let h = g
            .with_values(uniform_vec(&mut r, g.len(), -gscale, gscale))
            .unwrap();
        let a = r.gen_range(-3.0..3.0);
        let combo = g
            .with_values(
                g.values()
                    .iter()
                    .zip(h.values())
                    .map(|(x, y)| a * x + y)
                    .collect(),
            )
            .unwrap();
        let lhs = gradient_centralize(&combo);
        let gh = gradient_centralize(&h);
        let tol = 1e-12 * (a.abs() + 1.0) * frobenius_norm(&combo).max(gscale);
        for ((l, x), y) in lhs.values().iter().zip(gc.values()).zip(gh.values()) {
            if (l - (a * x + y)).abs() > tol {
                return Err(format!("tensor {i}: centralization is not linear"));
            }
        }
    }
    Ok(())
}

use ranger21::problems::{
    finite_diff_grad, make_blobs, Activation, MlpArch, MlpProblem, Objective, Quadratic, Rosenbrock,
};

/// Every objective kind, with small datasets so finite differences stay cheap.
pub fn grad_check_objectives() -> Vec<Box<dyn Objective>> {
    let mlp = |widths: Vec<usize>, act, smoothing, seed| -> Box<dyn Objective> {
        let data = make_blobs(seed, 24, widths[0], *widths.last().unwrap(), 2.0).unwrap();
        let arch = MlpArch::new(widths, act).unwrap();
        Box::new(MlpProblem::new(arch, data, smoothing, 8, seed).unwrap())
    };
    vec![
        Box::new(Rosenbrock { start: [-1.5, 2.0] }),
        Box::new(Quadratic::new(vec![1.0, 10.0, 1e3], vec![1.0, 1.0, 1.0]).unwrap()),
        mlp(vec![5, 7, 3], Activation::Tanh, 0.0, 1),
        mlp(vec![5, 7, 3], Activation::Relu, 0.1, 2),
        mlp(vec![6, 5, 5, 5, 5, 5, 5, 5, 4], Activation::Tanh, 0.1, 3),
    ]
}

/// Compare analytic gradients with central differences at `points` random
/// parameter vectors. Passes when each coordinate agrees within 1e-5
/// relative or 1e-8 absolute.
pub fn gradient_check(obj: &dyn Objective, points: usize, seed: u64) -> Result<(), String> {
    let mut r = rng(seed);
    let template = obj.init_params(seed).map_err(|e| e.to_string())?;
    for point in 0..points {
        let params: Vec<ParamTensor> = template
            .iter()
            .map(|p| {
                p.with_values(uniform_vec(&mut r, p.len(), -1.5, 1.5))
                    .unwrap()
            })
            .collect();
        let t = point as u64 + 1;
        let eval = obj.loss_and_grad(&params, t).map_err(|e| e.to_string())?;
        let fd = finite_diff_grad(|p| obj.loss_and_grad(p, t).unwrap().loss, &params, 1e-6)
            .map_err(|e| e.to_string())?;
        for (a, b) in eval.grads.iter().zip(&fd) {
            for (i, (x, y)) in a.values().iter().zip(b.values()).enumerate() {
                let diff = (x - y).abs();
                if diff > 1e-8 && diff > 1e-5 * x.abs().max(y.abs()) {
                    return Err(format!(
                        "{} point {point} {}[{i}]: analytic {x}, numeric {y}",
                        obj.name(),
                        a.name()
                    ));
                }
            }
        }
    }
    Ok(())
}
