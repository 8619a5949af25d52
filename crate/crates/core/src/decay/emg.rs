//! Exponentially modified Gaussian: a single-exponential decay convolved with
//! a Gaussian instrument response.

use std::f64::consts::{PI, SQRT_2};

/// Exponents above this are evaluated in log space.
const LOG_SPACE_THRESHOLD: f64 = 700.0;

/// Intensity at offset `x` (ns after the pulse) of a decay with peak amplitude
/// `amplitude` and lifetime `tau`, blurred by a Gaussian of width `sigma`.
///
/// With `sigma == 0` this is the bare one-sided exponential.
pub fn intensity(amplitude: f64, tau: f64, sigma: f64, x: f64) -> f64 {
    if amplitude == 0.0 {
        return 0.0;
    }
    if sigma == 0.0 {
        return if x >= 0.0 {
            amplitude * (-x / tau).exp()
        } else {
            0.0
        };
    }
    let z = sigma / (SQRT_2 * tau) - x / (SQRT_2 * sigma);
    let exponent = sigma * sigma / (2.0 * tau * tau) - x / tau;
    if exponent <= LOG_SPACE_THRESHOLD {
        0.5 * amplitude * exponent.exp() * libm::erfc(z)
    } else {
        // z > 0 whenever the exponent is this large.
        (exponent + ln_erfc(z) + (0.5 * amplitude).ln()).exp()
    }
}

/// `ln(erfc(z))`, switching to the asymptotic expansion once `erfc` underflows.
pub(crate) fn ln_erfc(z: f64) -> f64 {
    let direct = libm::erfc(z);
    if direct > 1e-300 {
        return direct.ln();
    }
    let inv = 1.0 / (z * z);
    let series = 1.0 - 0.5 * inv + 0.75 * inv * inv - 1.875 * inv * inv * inv;
    -z * z - (z * PI.sqrt()).ln() + series.ln()
}
