use statrs::distribution::{ContinuousCDF, Normal};
use statrs::function::erf::erfc;

use crate::{Error, Result};

/// Standard normal CDF Φ.
pub fn normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / std::f64::consts::SQRT_2)
}

/// Standard normal density φ.
pub fn normal_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// Inverse standard normal CDF, F⁻¹(p), accurate to |Φ(z) − p| ≤ 1e-10.
pub fn normal_quantile(p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::Invalid(format!("quantile level {p} outside (0, 1)")));
    }
    if p == 0.5 {
        return Ok(0.0);
    }
    let mut z = Normal::standard().inverse_cdf(p);
    // two Newton polishing steps on Φ(z) − p
    for _ in 0..2 {
        let pdf = normal_pdf(z);
        if pdf < 1e-300 {
            break;
        }
        z -= (normal_cdf(z) - p) / pdf;
    }
    Ok(z)
}
