//! Real-time price scenarios around the day-ahead price and the order-1
//! Markov price model trained from them.

mod markov;
mod quantile;

pub use markov::{fit_markov, MarkovPriceModel, DEFAULT_PRICE_BINS};
pub use quantile::{normal_cdf, normal_pdf, normal_quantile};

use std::fmt::Write as _;

use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::csvfmt::f6;
use crate::rng;
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct PriceScenarioSet {
    /// Day-ahead price per period, the scenario mean.
    pub dap: Vec<f64>,
    pub sigma: Vec<f64>,
    /// count × T realizations.
    pub scenarios: Vec<Vec<f64>>,
    pub seed: u64,
}

impl PriceScenarioSet {
    pub fn count(&self) -> usize {
        self.scenarios.len()
    }

    pub fn horizon(&self) -> usize {
        self.dap.len()
    }

    /// Wraps an imported matrix; `dap` and `sigma` become the sample moments.
    pub fn from_matrix(scenarios: Vec<Vec<f64>>) -> Result<Self> {
        let t_len = scenarios.first().map_or(0, Vec::len);
        if scenarios.is_empty() || t_len == 0 || scenarios.iter().any(|r| r.len() != t_len) {
            return Err(Error::Dimension("scenario matrix must be non-empty and rectangular".into()));
        }
        let n = scenarios.len() as f64;
        let dap: Vec<f64> = (0..t_len).map(|t| scenarios.iter().map(|r| r[t]).sum::<f64>() / n).collect();
        let sigma = (0..t_len)
            .map(|t| (scenarios.iter().map(|r| (r[t] - dap[t]).powi(2)).sum::<f64>() / n).sqrt())
            .collect();
        Ok(PriceScenarioSet { dap, sigma, scenarios, seed: 0 })
    }

    /// CSV with header `scenario,0,1,…` and one row per scenario.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("scenario");
        for t in 0..self.horizon() {
            let _ = write!(out, ",{t}");
        }
        out.push('\n');
        for (i, row) in self.scenarios.iter().enumerate() {
            let _ = write!(out, "{i}");
            for v in row {
                let _ = write!(out, ",{}", f6(*v));
            }
            out.push('\n');
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(text.as_bytes());
        let width = rdr.headers().map_err(|e| Error::Parse(e.to_string()))?.len();
        if width < 2 {
            return Err(Error::Parse("scenario header needs at least one period".into()));
        }
        let mut rows = Vec::new();
        for rec in rdr.records() {
            let rec = rec.map_err(|e| Error::Parse(e.to_string()))?;
            let row = rec
                .iter()
                .skip(1)
                .map(|f| f.trim().parse::<f64>().map_err(|_| Error::Parse(format!("bad price {f:?}"))))
                .collect::<Result<Vec<_>>>()?;
            if row.iter().any(|v| !v.is_finite()) {
                return Err(Error::Parse("non-finite price".into()));
            }
            rows.push(row);
        }
        Self::from_matrix(rows)
    }
}

fn check_inputs(dap: &[f64], sigma: &[f64], count: usize) -> Result<()> {
    if count == 0 {
        return Err(Error::Invalid("scenario count must be >= 1".into()));
    }
    if dap.len() != sigma.len() || dap.is_empty() {
        return Err(Error::Dimension(format!("dap has {} periods, sigma {}", dap.len(), sigma.len())));
    }
    if let Some(t) = sigma.iter().position(|s| !(*s >= 0.0) || !s.is_finite()) {
        return Err(Error::Invalid(format!("sigma[{t}] = {} must be finite and >= 0", sigma[t])));
    }
    if let Some(t) = dap.iter().position(|d| !d.is_finite()) {
        return Err(Error::Invalid(format!("dap[{t}] is not finite")));
    }
    Ok(())
}

/// Gaussian real-time prices `λ_t = dap_t + σ_t Z_t`, independent across
/// periods. Scenario `i` draws from its own stream derived from
/// `(seed, i)`, so the result does not depend on worker count.
pub fn generate_rtp_scenarios(dap: &[f64], sigma: &[f64], count: usize, seed: u64) -> Result<PriceScenarioSet> {
    generate_ar1_scenarios(dap, sigma, count, seed, 0.0)
}

/// Same as [`generate_rtp_scenarios`] with AR(1) standardized noise
/// `Z_t = φ Z_{t-1} + √(1−φ²) ε_t`, which gives the Markov fit actual
/// period-to-period dynamics.
pub fn generate_ar1_scenarios(
    dap: &[f64],
    sigma: &[f64],
    count: usize,
    seed: u64,
    phi: f64,
) -> Result<PriceScenarioSet> {
    check_inputs(dap, sigma, count)?;
    if !(-1.0 < phi && phi < 1.0) {
        return Err(Error::Invalid(format!("autocorrelation {phi} outside (-1, 1)")));
    }
    let innov = (1.0 - phi * phi).sqrt();
    let scenarios = (0..count)
        .into_par_iter()
        .map(|i| {
            let mut r = rng::stream(seed, &[i as u64]);
            let mut z = 0.0f64;
            dap.iter()
                .zip(sigma)
                .enumerate()
                .map(|(t, (d, s))| {
                    let e: f64 = StandardNormal.sample(&mut r);
                    z = if t == 0 { e } else { phi * z + innov * e };
                    d + s * z
                })
                .collect()
        })
        .collect();
    Ok(PriceScenarioSet { dap: dap.to_vec(), sigma: sigma.to_vec(), scenarios, seed })
}
