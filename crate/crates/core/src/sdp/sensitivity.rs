use super::stage::{thresholds, MarginalCurve};
use crate::price::normal_pdf;
use crate::system::Storage;
use crate::{Error, Result};

fn pdf_at(c: f64, mu: f64, sigma: f64) -> f64 {
    if c.is_infinite() {
        0.0
    } else {
        normal_pdf((c - mu) / sigma)
    }
}

/// `∂E[q(e)]/∂σ` for a Gaussian price `N(μ, σ²)` at every grid point of
/// `v_next`. Only the two sloped pieces of `q` contribute:
/// `[φ(a1) − φ(a2)]/η + η[φ(a3) − φ(a4)]` with `a_i = (c_i − μ)/σ`.
pub fn sigma_sensitivity_analytic(v_next: &MarginalCurve<'_>, storage: &Storage, mu: f64, sigma: f64) -> Result<Vec<f64>> {
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(Error::Invalid(format!("sigma must be positive, got {sigma}")));
    }
    v_next.check_monotone(1e-8)?;
    let eta = storage.efficiency;
    Ok(v_next
        .grid
        .iter()
        .map(|&e| {
            let th = thresholds(v_next, e, storage);
            (pdf_at(th.c1, mu, sigma) - pdf_at(th.c2, mu, sigma)) / eta
                + eta * (pdf_at(th.c3, mu, sigma) - pdf_at(th.c4, mu, sigma))
        })
        .collect())
}

/// Smallest scanned σ above which the sensitivity at SoC `e` stays
/// non-negative over `(σ, sigma_max]`, refined by bisection. `None` when
/// the sensitivity is negative at `sigma_max` itself.
pub fn sensitivity_threshold(v_next: &MarginalCurve<'_>, storage: &Storage, mu: f64, e: f64, sigma_max: f64) -> Option<f64> {
    let eta = storage.efficiency;
    let th = thresholds(v_next, e, storage);
    let d = |s: f64| {
        (pdf_at(th.c1, mu, s) - pdf_at(th.c2, mu, s)) / eta + eta * (pdf_at(th.c3, mu, s) - pdf_at(th.c4, mu, s))
    };
    let steps = 400;
    let mut last_negative = None;
    for k in 1..=steps {
        let s = sigma_max * k as f64 / steps as f64;
        if d(s) < 0.0 {
            last_negative = Some(s);
        }
    }
    match last_negative {
        None => Some(0.0),
        Some(s) if s >= sigma_max => None,
        Some(s) => {
            let (mut lo, mut hi) = (s, s + sigma_max / steps as f64);
            for _ in 0..60 {
                let mid = 0.5 * (lo + hi);
                if d(mid) < 0.0 {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            Some(hi)
        }
    }
}
