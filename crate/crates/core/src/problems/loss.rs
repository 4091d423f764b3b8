use crate::error::{Error, Result};

/// Cross-entropy against a label-smoothed target.
///
/// The target distribution is `(1 - alpha) * onehot + alpha / C`, so the true
/// class receives `1 - alpha + alpha / C`. Returns the loss and its gradient
/// with respect to the logits, `softmax(logits) - target`.
pub fn label_smoothed_ce(logits: &[f64], target: usize, alpha: f64) -> Result<(f64, Vec<f64>)> {
    let classes = logits.len();
    if classes < 2 {
        return Err(Error::config("classes", "need at least 2 logits"));
    }
    if target >= classes {
        return Err(Error::TargetOutOfRange { target, classes });
    }
    if !(0.0..1.0).contains(&alpha) {
        return Err(Error::config(
            "label_smoothing",
            format!("must be in [0, 1), got {alpha}"),
        ));
    }
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let sum_exp: f64 = logits.iter().map(|z| (z - max).exp()).sum();
    let log_z = max + sum_exp.ln();
    let off = alpha / classes as f64;
    let on = 1.0 - alpha + off;

    let mut loss = log_z;
    let mut grad = Vec::with_capacity(classes);
    for (i, &z) in logits.iter().enumerate() {
        let q = if i == target { on } else { off };
        loss -= q * z;
        grad.push((z - log_z).exp() - q);
    }
    Ok((loss, grad))
}
