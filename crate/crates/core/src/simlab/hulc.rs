//! Confidence intervals from the range of batch estimates.
//!
//! Split the sample into B disjoint batches and return the smallest and
//! largest batch estimate. If every batch estimator is continuous and median
//! unbiased, all B estimates fall on one side of θ₀ with probability
//! 2·2^{−B}, so B = ⌈log₂(2/α)⌉ gives coverage at least 1 − α.

use crate::error::{Error, Result};

/// B = ⌈log₂(2/α)⌉.
pub fn hulc_batches(alpha: f64) -> Result<usize> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidArgument(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    Ok((2.0 / alpha).log2().ceil() as usize)
}

/// Miss probability 2^{1−B} for a continuous median-unbiased estimator.
pub fn hulc_miss_probability(batches: usize) -> f64 {
    2f64.powi(1 - batches as i32)
}

/// [min, max] of `estimator` over B equal consecutive batches of `data`.
/// Trailing observations that do not fill a batch are left out.
pub fn hulc_interval<F>(data: &[f64], alpha: f64, estimator: F) -> Result<(f64, f64)>
where
    F: Fn(&[f64]) -> Result<f64>,
{
    let b = hulc_batches(alpha)?;
    let size = data.len() / b;
    if size < 1 {
        return Err(Error::InvalidArgument(format!(
            "{} observations cannot fill {b} batches",
            data.len()
        )));
    }
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for batch in data.chunks_exact(size).take(b) {
        let est = estimator(batch)?;
        lo = lo.min(est);
        hi = hi.max(est);
    }
    Ok((lo, hi))
}
