use std::fmt::Write as _;

use super::{build_dispatch, solve_dispatch, ComplementarityMode, DispatchSolution, History};
use crate::csvfmt::f6;
use crate::system::{NetloadModel, PowerSystem};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Provenance {
    DayAhead,
    Rolling(usize),
    Hindsight,
}

impl Provenance {
    pub fn label(&self) -> String {
        match self {
            Provenance::DayAhead => "DA".into(),
            Provenance::Rolling(k) => format!("RT@{k}"),
            Provenance::Hindsight => "hindsight".into(),
        }
    }
}

/// Opportunity-cost trajectory θ and its running ceiling
/// `B_s(k) = max_{t≥k} θ_{s,t}`.
#[derive(Clone, Debug, PartialEq)]
pub struct BoundSeries {
    pub provenance: Provenance,
    /// First period covered; `theta[w]` is period `start + w`.
    pub start: usize,
    /// `[period][storage]`.
    pub theta: Vec<Vec<f64>>,
    /// `[storage]`.
    pub ceiling: Vec<f64>,
    /// LMP at each storage node, `[period][storage]`.
    pub lmp: Vec<Vec<f64>>,
    /// Balance multiplier λ^ε per period.
    pub lambda: Vec<f64>,
}

impl BoundSeries {
    pub fn storages(&self) -> usize {
        self.ceiling.len()
    }

    /// Ceiling over periods `≥ t` (absolute index).
    pub fn ceiling_from(&self, s: usize, t: usize) -> f64 {
        let from = t.saturating_sub(self.start);
        self.theta.iter().skip(from).map(|r| r[s]).fold(f64::NEG_INFINITY, f64::max)
    }

    /// θ at absolute period `t`.
    pub fn theta_at(&self, s: usize, t: usize) -> Option<f64> {
        t.checked_sub(self.start).and_then(|w| self.theta.get(w)).map(|r| r[s])
    }
}

/// Reads θ from the SoC-dynamics multipliers for periods `≥ k`.
pub fn extract_bounds(solution: &DispatchSolution, k: usize, provenance: Provenance) -> Result<BoundSeries> {
    if !solution.is_clean() {
        let r = solution.residuals;
        return Err(Error::DirtyDuals(format!(
            "refusing to derive bounds: primal {:.2e}, dual {:.2e}, complementarity {:.2e}",
            r.primal, r.dual, r.complementarity
        )));
    }
    if k < solution.window_start || k >= solution.window_start + solution.window_len() {
        return Err(Error::Invalid(format!("bound start {k} outside the solved window")));
    }
    let skip = k - solution.window_start;
    let stor = solution.duals.theta.first().map_or(0, Vec::len);
    let theta: Vec<Vec<f64>> = solution.duals.theta[skip..].to_vec();
    let ceiling = (0..stor).map(|s| theta.iter().map(|r| r[s]).fold(f64::NEG_INFINITY, f64::max)).collect();
    let lmp = (skip..solution.window_len()).map(|w| (0..stor).map(|s| solution.storage_lmp(s, w)).collect()).collect();
    Ok(BoundSeries {
        provenance,
        start: k,
        theta,
        ceiling,
        lmp,
        lambda: solution.duals.lambda[skip..].to_vec(),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Branch {
    /// max LMP / η.
    Charge,
    /// (max LMP − M) η.
    Discharge,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BoundCheck {
    pub storage: usize,
    pub max_theta: f64,
    pub max_lmp: f64,
    pub charge_value: f64,
    pub discharge_value: f64,
    /// Branch whose value is nearest to max θ.
    pub binding: Branch,
    /// Period at which θ peaks.
    pub peak_period: usize,
    pub holds: bool,
}

/// Verifies `max θ ≤ max(max LMP/η, (max LMP − M)η)` per storage at the
/// storage node and names the branch nearest to the attained maximum.
pub fn bound_formula_check(solution: &DispatchSolution, system: &PowerSystem, tol: f64) -> Vec<BoundCheck> {
    system
        .storages
        .iter()
        .enumerate()
        .map(|(s, st)| {
            let (mut max_theta, mut peak) = (f64::NEG_INFINITY, 0);
            for (w, r) in solution.duals.theta.iter().enumerate() {
                if r[s] > max_theta {
                    max_theta = r[s];
                    peak = w;
                }
            }
            let max_lmp = (0..solution.window_len()).map(|w| solution.storage_lmp(s, w)).fold(f64::NEG_INFINITY, f64::max);
            let charge_value = max_lmp / st.efficiency;
            let discharge_value = (max_lmp - st.marginal_cost) * st.efficiency;
            let bound = charge_value.max(discharge_value);
            let binding = if (max_theta - charge_value).abs() <= (max_theta - discharge_value).abs() {
                Branch::Charge
            } else {
                Branch::Discharge
            };
            BoundCheck {
                storage: s,
                max_theta,
                max_lmp,
                charge_value,
                discharge_value,
                binding,
                peak_period: solution.window_start + peak,
                holds: max_theta <= bound + tol * (1.0 + bound.abs()),
            }
        })
        .collect()
}

/// `min(1, lead / lookahead)`.
pub fn linear_decay(lookahead: usize) -> impl Fn(usize) -> f64 {
    move |lead| (lead as f64 / lookahead.max(1) as f64).min(1.0)
}

#[derive(Clone, Debug)]
pub struct RollingBounds {
    pub day_ahead: BoundSeries,
    /// One series per update `k = 0..T`.
    pub steps: Vec<BoundSeries>,
    pub hindsight: BoundSeries,
    /// First-period decisions of each rolling solve.
    pub realized_dispatch: History,
}

impl RollingBounds {
    pub fn ceilings(&self, s: usize) -> Vec<f64> {
        self.steps.iter().map(|b| b.ceiling[s]).collect()
    }
}

/// Conditional forecast at update `k`: period `k` is realized, and a period
/// at lead `h > 0` has mean `μ + (1 − m)(ξ − μ)` and deviation `m σ` with
/// `m = decay(h)`.
pub fn conditional_netload(forecast: &NetloadModel, realized: &[Vec<f64>], k: usize, decay: &dyn Fn(usize) -> f64) -> NetloadModel {
    let mut mu = forecast.mu.clone();
    let mut sigma = forecast.sigma.clone();
    for n in 0..forecast.nodes() {
        for t in 0..forecast.periods() {
            if t <= k {
                mu[n][t] = realized[n][t];
                sigma[n][t] = 0.0;
            } else {
                let m = decay(t - k);
                mu[n][t] = forecast.mu[n][t] + (1.0 - m) * (realized[n][t] - forecast.mu[n][t]);
                sigma[n][t] = m * forecast.sigma[n][t];
            }
        }
    }
    NetloadModel { mu, sigma, correlation: forecast.correlation.clone() }
}

/// Day-ahead, rolling and hindsight bound series for one realization.
/// Update `k` fixes the realized operations of periods `< k`, uses the
/// realized netload at `k`, re-solves `[k, T)` and implements period `k`.
pub fn rolling_bounds(
    system: &PowerSystem,
    forecast: &NetloadModel,
    epsilon: f64,
    realized: &[Vec<f64>],
    decay: &dyn Fn(usize) -> f64,
    mode: ComplementarityMode,
) -> Result<RollingBounds> {
    let horizon = forecast.periods();
    if realized.len() != forecast.nodes() || realized.iter().any(|r| r.len() != horizon) {
        return Err(Error::Dimension("realized netload must match the forecast shape".into()));
    }
    if let Some(bad) = realized.iter().flatten().find(|v| !v.is_finite()) {
        return Err(Error::Invalid(format!("realized netload value {bad} is not finite")));
    }
    let mut last = 0.0;
    for lead in 1..horizon.max(2) {
        let m = decay(lead);
        if !(0.0..=1.0).contains(&m) || m < last {
            return Err(Error::Invalid(format!("decay must be non-decreasing in [0, 1]; got {m} at lead {lead}")));
        }
        last = m;
    }

    let da_prob = build_dispatch(system, forecast, epsilon, 0, &History::default(), mode)?;
    let day_ahead = extract_bounds(&solve_dispatch(&da_prob)?, 0, Provenance::DayAhead)?;

    let hind_model = NetloadModel::deterministic(realized.to_vec());
    let hind_prob = build_dispatch(system, &hind_model, epsilon, 0, &History::default(), mode)?;
    let hindsight = extract_bounds(&solve_dispatch(&hind_prob)?, 0, Provenance::Hindsight)?;

    let mut history = History::default();
    let mut steps = Vec::with_capacity(horizon);
    for k in 0..horizon {
        let model = conditional_netload(forecast, realized, k, decay);
        let prob = build_dispatch(system, &model, epsilon, k, &history, mode)
            .map_err(|e| Error::Infeasible(format!("rolling update k={k}: {e}")))?;
        let sol = solve_dispatch(&prob).map_err(|e| match e {
            Error::Infeasible(m) => Error::Infeasible(format!("rolling update k={k}: {m}")),
            other => other,
        })?;
        steps.push(extract_bounds(&sol, k, Provenance::Rolling(k))?);
        history.push_first(&sol);
    }
    Ok(RollingBounds { day_ahead, steps, hindsight, realized_dispatch: history })
}

/// Rows `(scenario_id, k, s, t, theta, B, lmp_node, lambda_eps)`.
pub fn bounds_csv(rows: &[(usize, &BoundSeries)]) -> String {
    let mut out = String::from("scenario_id,k,s,t,theta,B,lmp_node,lambda_eps\n");
    for (id, series) in rows {
        for s in 0..series.storages() {
            for (w, th) in series.theta.iter().enumerate() {
                let _ = writeln!(
                    out,
                    "{id},{},{s},{},{},{},{},{}",
                    series.start,
                    series.start + w,
                    f6(th[s]),
                    f6(series.ceiling[s]),
                    f6(series.lmp[w][s]),
                    f6(series.lambda[w])
                );
            }
        }
    }
    out
}
