//! Gradient-to-gradient transforms applied before moment estimation.
//!
//! Order inside a Ranger21 step is fixed: unit-wise adaptive clipping first,
//! then centralization.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{frobenius_norm, mean_all_but_first, row_norms, ParamTensor};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClipConfig {
    /// Maximum allowed ratio of gradient norm to parameter norm per unit.
    pub tau: f64,
    /// Floor on the parameter norm so zero-initialized units still move.
    pub eps_clipping: f64,
}

impl Default for ClipConfig {
    fn default() -> Self {
        Self {
            tau: 1e-2,
            eps_clipping: 1e-3,
        }
    }
}

impl ClipConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(Error::config(
                "tau",
                format!("must be > 0, got {}", self.tau),
            ));
        }
        if !(self.eps_clipping > 0.0 && self.eps_clipping.is_finite()) {
            return Err(Error::config(
                "eps_clipping",
                format!("must be > 0, got {}", self.eps_clipping),
            ));
        }
        Ok(())
    }
}

/// Per-tensor clipping statistics, computed on the incoming gradient.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ClipStats {
    pub units: usize,
    pub clipped: usize,
    /// Sum over units of `‖gʳ‖ / max(‖θʳ‖, ε)` before clipping.
    pub ratio_sum: f64,
}

impl ClipStats {
    pub fn mean_ratio(&self) -> f64 {
        if self.units == 0 {
            0.0
        } else {
            self.ratio_sum / self.units as f64
        }
    }
}

/// Unit-wise adaptive gradient clipping.
///
/// A unit whose gradient-to-parameter norm ratio exceeds `tau` is rescaled
/// to sit exactly on the threshold; its direction is unchanged.
pub fn adaptive_gradient_clip(
    g: &ParamTensor,
    theta: &ParamTensor,
    cfg: &ClipConfig,
) -> Result<ParamTensor> {
    adaptive_gradient_clip_with_stats(g, theta, cfg).map(|(clipped, _)| clipped)
}

pub fn adaptive_gradient_clip_with_stats(
    g: &ParamTensor,
    theta: &ParamTensor,
    cfg: &ClipConfig,
) -> Result<(ParamTensor, ClipStats)> {
    theta.expect_same_shape(g)?;
    let g_norms = row_norms(g);
    let p_norms = row_norms(theta);
    let width = g.row_len();
    let mut out = g.values().to_vec();
    let mut stats = ClipStats {
        units: g_norms.len(),
        ..ClipStats::default()
    };
    for (r, (&gn, &pn)) in g_norms.iter().zip(&p_norms).enumerate() {
        let max_norm = pn.max(cfg.eps_clipping);
        let ratio = gn / max_norm;
        stats.ratio_sum += ratio;
        if ratio > cfg.tau {
            stats.clipped += 1;
            let scale = cfg.tau * max_norm / gn;
            for v in &mut out[r * width..(r + 1) * width] {
                *v *= scale;
            }
        }
    }
    Ok((g.with_values(out)?, stats))
}

/// Whole-tensor threshold clipping on the Frobenius norm.
///
/// Reference behaviour for the adaptive variant; no optimizer preset uses it.
pub fn threshold_clip_oracle(g: &ParamTensor, tau: f64) -> ParamTensor {
    let norm = frobenius_norm(g);
    if norm > tau {
        let scale = tau / norm;
        let values = g.values().iter().map(|v| v * scale).collect();
        g.with_values(values)
            .expect("scaling by a factor below one keeps values finite")
    } else {
        g.clone()
    }
}

/// Subtract each dim-0 slice's mean from multi-dimensional gradients.
/// Rank-1 gradients are returned unchanged.
pub fn gradient_centralize(g: &ParamTensor) -> ParamTensor {
    if g.rank() < 2 {
        return g.clone();
    }
    let means = mean_all_but_first(g).expect("rank checked above");
    let width = g.row_len();
    let values = g
        .values()
        .chunks_exact(width)
        .zip(&means)
        .flat_map(|(row, m)| row.iter().map(move |v| v - m))
        .collect();
    g.with_values(values)
        .expect("subtracting a finite mean keeps values finite")
}
