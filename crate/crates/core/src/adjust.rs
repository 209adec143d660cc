//! Interval identification against a disclosed opportunity-cost bound, and
//! bid capping.
//!
//! The storage's real-time price interval `σ̃ = m σ^DA` is shrunk by
//! bisection on `m` until the retrained marginal value function stays below
//! the bound. Bids built from any value function can also be capped
//! directly at the bound.

use std::fmt::Write as _;

use crate::price::{fit_markov, generate_rtp_scenarios, MarkovPriceModel, DEFAULT_PRICE_BINS};
use crate::sdp::{train_value_function, BidCurve, BidSegment, ValueFunction, DEFAULT_SOC_POINTS};
use crate::system::Storage;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Scope {
    /// One multiplier on the whole σ^DA trajectory.
    #[default]
    TrajectoryMultiplier,
    /// One multiplier per period, bisected from the last period backwards.
    PerPeriod,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdjustConfig {
    /// Bisection tolerance in $/MWh.
    pub delta: f64,
    pub max_iter: usize,
    pub scope: Scope,
}

impl Default for AdjustConfig {
    fn default() -> Self {
        AdjustConfig { delta: 0.01, max_iter: 64, scope: Scope::TrajectoryMultiplier }
    }
}

/// Bisection steps needed to bring `sigma_max · width` from `sigma_max`
/// down to `delta`.
pub fn iteration_budget(sigma_max: f64, delta: f64) -> usize {
    if sigma_max <= delta {
        0
    } else {
        (sigma_max / delta).log2().ceil() as usize
    }
}

/// How a candidate interval is turned into a value function.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PriceModelConfig {
    /// Monte Carlo price paths per fit.
    pub scenarios: usize,
    pub bins: usize,
    pub soc_points: usize,
    /// Seed of the price paths. The same paths are rescaled for every
    /// candidate, so the fitted model varies smoothly with the interval.
    pub seed: u64,
}

impl Default for PriceModelConfig {
    fn default() -> Self {
        PriceModelConfig { scenarios: 1000, bins: DEFAULT_PRICE_BINS, soc_points: DEFAULT_SOC_POINTS, seed: 0 }
    }
}

/// Markov price model for real-time prices `dap + σ Z`.
pub fn price_model(dap: &[f64], sigma: &[f64], cfg: &PriceModelConfig) -> Result<MarkovPriceModel> {
    if sigma.iter().all(|s| *s == 0.0) {
        return Ok(MarkovPriceModel::deterministic(dap));
    }
    fit_markov(&generate_rtp_scenarios(dap, sigma, cfg.scenarios, cfg.seed)?, cfg.bins)
}

/// Value function of a storage that expects prices `dap ± σ`.
pub fn train_policy(dap: &[f64], sigma: &[f64], storage: &Storage, cfg: &PriceModelConfig) -> Result<ValueFunction> {
    train_value_function(&price_model(dap, sigma, cfg)?, storage, None, cfg.soc_points)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TraceRow {
    pub iteration: usize,
    pub m_lo: f64,
    pub m_hi: f64,
    pub violated: bool,
}

#[derive(Clone, Debug)]
pub struct AdjustedInterval {
    /// Multiplier applied to σ^DA in each period.
    pub multiplier: Vec<f64>,
    pub sigma_star: Vec<f64>,
    pub value_function: ValueFunction,
    /// Set when even a zero interval exceeds the bound: the bound lies below
    /// the deterministic value of energy at the expected prices.
    pub infeasible_at_zero: bool,
    /// Bisection steps, not counting the two endpoint checks.
    pub iterations: usize,
    pub trace: Vec<TraceRow>,
}

impl AdjustedInterval {
    pub fn trace_csv(&self) -> String {
        let mut out = String::from("iteration,m_lo,m_hi,violated\n");
        for r in &self.trace {
            let _ = writeln!(out, "{},{:.6},{:.6},{}", r.iteration, r.m_lo, r.m_hi, r.violated);
        }
        out
    }
}

/// First `(t, price state, SoC index)` where `v[t] > θ[t + 1]`.
///
/// `v[t]` values energy held at the end of period `t`, which the dispatch
/// prices through the SoC multiplier of period `t + 1`. The terminal slice
/// has no bound to compare with.
pub fn first_violation(vf: &ValueFunction, theta: &[f64]) -> Option<(usize, usize, usize)> {
    for t in 0..vf.horizon().saturating_sub(1) {
        let bound = theta[t + 1];
        let tol = 1e-9 * (1.0 + bound.abs());
        for (j, slice) in vf.v[t].iter().enumerate() {
            if let Some(k) = slice.iter().position(|v| *v > bound + tol) {
                return Some((t, j, k));
            }
        }
    }
    None
}

/// Shrinks the price interval the storage assumes until its trained
/// marginal value function never exceeds `theta`.
///
/// `theta`, `sigma_da` and `dap` cover the same periods. The returned
/// multiplier is the largest verified one: the lower end of the final
/// bracket, so the returned value function always satisfies the bound
/// unless `infeasible_at_zero` is set.
pub fn identify_interval(
    theta: &[f64],
    sigma_da: &[f64],
    dap: &[f64],
    storage: &Storage,
    model: &PriceModelConfig,
    config: &AdjustConfig,
) -> Result<AdjustedInterval> {
    let t_len = dap.len();
    if theta.len() != t_len || sigma_da.len() != t_len {
        return Err(Error::Dimension(format!(
            "theta ({}), sigma ({}) and dap ({t_len}) must cover the same periods",
            theta.len(),
            sigma_da.len()
        )));
    }
    if theta.iter().any(|x| x.is_nan()) {
        return Err(Error::Invalid("bound contains NaN".into()));
    }
    if let Some(t) = sigma_da.iter().position(|s| !(s.is_finite() && *s >= 0.0)) {
        return Err(Error::Invalid(format!("sigma[{t}] = {} must be finite and >= 0", sigma_da[t])));
    }
    if !(config.delta > 0.0) {
        return Err(Error::Invalid(format!("delta {} must be > 0", config.delta)));
    }
    let sigma_max = sigma_da.iter().fold(0.0f64, |a, b| a.max(*b));
    let budget = iteration_budget(sigma_max, config.delta);
    if config.max_iter < budget {
        return Err(Error::Invalid(format!("max_iter {} below the {budget} steps delta requires", config.max_iter)));
    }

    let train = |m: &[f64]| {
        let sigma: Vec<f64> = sigma_da.iter().zip(m).map(|(s, m)| s * m).collect();
        train_policy(dap, &sigma, storage, model)
    };
    let violates = |vf: &ValueFunction| first_violation(vf, theta).is_some();

    let mut m = vec![1.0; t_len];
    let mut vf = train(&m)?;
    let mut trace = Vec::new();
    let mut iterations = 0;
    if !violates(&vf) {
        return Ok(finish(m, sigma_da, vf, false, 0, trace));
    }
    let periods: Vec<Vec<usize>> = match config.scope {
        Scope::TrajectoryMultiplier => vec![(0..t_len).collect()],
        Scope::PerPeriod => (0..t_len).rev().map(|t| vec![t]).collect(),
    };
    for group in periods {
        let span = group.iter().map(|t| sigma_da[*t]).fold(0.0f64, f64::max);
        let set = |m: &mut Vec<f64>, x: f64| group.iter().for_each(|t| m[*t] = x);
        let hi_start = m[group[0]];
        set(&mut m, 0.0);
        let at_zero = train(&m)?;
        if violates(&at_zero) {
            vf = at_zero;
            continue;
        }
        vf = at_zero;
        let (mut lo, mut hi) = (0.0, hi_start);
        while span * (hi - lo) > config.delta {
            if iterations >= config.max_iter {
                return Err(Error::Invalid(format!("bisection exceeded {} steps", config.max_iter)));
            }
            iterations += 1;
            let mid = 0.5 * (lo + hi);
            set(&mut m, mid);
            let cand = train(&m)?;
            let bad = violates(&cand);
            if bad {
                hi = mid;
            } else {
                lo = mid;
                vf = cand;
            }
            trace.push(TraceRow { iteration: iterations, m_lo: lo, m_hi: hi, violated: bad });
        }
        set(&mut m, lo);
        return Ok(finish(m, sigma_da, vf, false, iterations, trace));
    }
    Ok(finish(m, sigma_da, vf, true, iterations, trace))
}

fn finish(
    multiplier: Vec<f64>,
    sigma_da: &[f64],
    value_function: ValueFunction,
    infeasible_at_zero: bool,
    iterations: usize,
    trace: Vec<TraceRow>,
) -> AdjustedInterval {
    let sigma_star = sigma_da.iter().zip(&multiplier).map(|(s, m)| s * m).collect();
    AdjustedInterval { multiplier, sigma_star, value_function, infeasible_at_zero, iterations, trace }
}

/// Caps a period's bids at the bound `theta`: discharge offers at
/// `M + θ/η`, charge bids at `θ η`. Quantities are untouched.
pub fn cap_bids(bids: &BidCurve, theta: f64, storage: &Storage) -> BidCurve {
    let eta = storage.efficiency;
    let dis_cap = storage.marginal_cost + theta / eta;
    let ch_cap = theta * eta;
    let cap = |segs: &[BidSegment], c: f64| segs.iter().map(|s| BidSegment { quantity: s.quantity, price: s.price.min(c) }).collect();
    BidCurve { discharge: cap(&bids.discharge, dis_cap), charge: cap(&bids.charge, ch_cap) }
}
