//! Bisection on the waterfilling multiplier θ.
//!
//! The allocation produced by a fixed θ is non-increasing in θ, so the
//! budget crossing is bracketed by a small `θ_min` and a `θ_max` that is
//! doubled until the allocation fits.

use crate::error::{NrdfError, Result};

pub(crate) const THETA_MIN: f64 = 1e-12;
pub(crate) const MAX_DOUBLINGS: usize = 200;

/// Doubles `theta_max` until `exceeds(theta_max)` is false.
pub(crate) fn bracket_upper(mut theta_max: f64, mut exceeds: impl FnMut(f64) -> bool) -> Result<f64> {
    for _ in 0..=MAX_DOUBLINGS {
        if !theta_max.is_finite() {
            break;
        }
        if !exceeds(theta_max) {
            return Ok(theta_max);
        }
        theta_max *= 2.0;
    }
    Err(NrdfError::BracketFailure { theta_max })
}

/// Bisects `[lo, hi]` until the bracket is narrower than `width_tol` and
/// returns the upper end, i.e. the last θ whose allocation did not exceed.
pub(crate) fn bisect(mut lo: f64, mut hi: f64, width_tol: f64, mut exceeds: impl FnMut(f64) -> bool) -> f64 {
    let mut theta = 0.5 * (lo + hi);
    loop {
        if exceeds(theta) {
            lo = theta;
        } else {
            hi = theta;
        }
        if hi - lo < width_tol {
            break;
        }
        let mid = 0.5 * (lo + hi);
        // bracket exhausted in floating point
        if mid <= lo || mid >= hi {
            break;
        }
        theta = mid;
    }
    hi
}
