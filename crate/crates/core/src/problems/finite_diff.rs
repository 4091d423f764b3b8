use crate::error::{Error, Result};
use crate::tensor::ParamTensor;

/// Central-difference gradient of `f`, one coordinate at a time.
pub fn finite_diff_grad<F>(f: F, params: &[ParamTensor], h: f64) -> Result<Vec<ParamTensor>>
where
    F: Fn(&[ParamTensor]) -> f64,
{
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::config("h", format!("must be > 0, got {h}")));
    }
    let mut work = params.to_vec();
    let mut grads = Vec::with_capacity(params.len());
    for k in 0..params.len() {
        let base = params[k].values().to_vec();
        let mut g = Vec::with_capacity(base.len());
        for i in 0..base.len() {
            let mut shifted = base.clone();
            shifted[i] = base[i] + h;
            work[k] = params[k].with_values(shifted.clone())?;
            let up = f(&work);
            shifted[i] = base[i] - h;
            work[k] = params[k].with_values(shifted)?;
            let down = f(&work);
            g.push((up - down) / (2.0 * h));
        }
        work[k] = params[k].clone();
        grads.push(params[k].with_values(g)?);
    }
    Ok(grads)
}
