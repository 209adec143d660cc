//! Day-ahead / real-time experiment loop.
//!
//! For every day-ahead scenario the dispatch on the day-ahead forecast gives
//! the day-ahead prices and bounds, and each storage trains its original
//! policy from those prices. For every real-time scenario the rolling
//! dispatch gives the real-time bounds, the adjusted policies are found by
//! interval bisection, and the real-time market is cleared period by period
//! against the storage bids under each toggle.

mod clear;
mod summary;

pub use clear::{clear_rt_market, Clearing, MarketState, DEFAULT_VOLL, TIE_BREAK};
pub use summary::{sign_test_p, summarize, summary_csv, Grouping, SummaryRow};

use std::collections::HashMap;
use std::fmt::Write as _;
use std::sync::Arc;

use rayon::prelude::*;

use crate::adjust::{cap_bids, identify_interval, train_policy, AdjustConfig, AdjustedInterval, PriceModelConfig};
use crate::ced::{
    build_dispatch, linear_decay, rolling_bounds, solve_dispatch, ComplementarityMode, History, RollingBounds,
};
use crate::csvfmt::f6;
use crate::rng::{derive_seed, stream};
use crate::sdp::{make_bids, BidCurve, ValueFunction};
use crate::system::{NetloadModel, PowerSystem, Storage};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Toggle {
    Original,
    /// Policy retrained on the bisected interval.
    Adjusted,
    /// Original bids capped at the real-time bound.
    Capped,
    /// Adjusted policy with capped bids.
    Both,
}

impl Toggle {
    pub fn label(&self) -> &'static str {
        match self {
            Toggle::Original => "original",
            Toggle::Adjusted => "adjusted",
            Toggle::Capped => "capped",
            Toggle::Both => "both",
        }
    }

    pub fn parse(s: &str) -> Result<Toggle> {
        match s.trim() {
            "original" => Ok(Toggle::Original),
            "adjusted" => Ok(Toggle::Adjusted),
            "capped" => Ok(Toggle::Capped),
            "both" => Ok(Toggle::Both),
            other => Err(Error::Invalid(format!("unknown toggle {other:?}"))),
        }
    }

    fn adjusted(&self) -> bool {
        matches!(self, Toggle::Adjusted | Toggle::Both)
    }

    fn capped(&self) -> bool {
        matches!(self, Toggle::Capped | Toggle::Both)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentPlan {
    pub da_scenarios: usize,
    pub rt_per_da: usize,
    pub seed: u64,
    pub epsilon: f64,
    /// Baseline real-time price interval each storage assumes, per period.
    pub price_sigma: Vec<f64>,
    /// Multipliers on `price_sigma`; each gets its own result partition.
    pub sigma_scales: Vec<f64>,
    /// Factors applied to discharge offer prices before clearing.
    pub withholding: Vec<f64>,
    pub toggles: Vec<Toggle>,
    /// Day-ahead forecasts are the base mean shifted by `da_spread · σ · ζ`
    /// with one standard normal `ζ` per node and day.
    pub da_spread: f64,
    /// Forecast lead (periods) at which the conditional σ returns to its
    /// day-ahead value.
    pub lookahead: usize,
    pub bid_segments: usize,
    pub voll: f64,
    pub price_model: PriceModelConfig,
    pub adjust: AdjustConfig,
}

impl ExperimentPlan {
    pub fn new(price_sigma: Vec<f64>) -> Self {
        ExperimentPlan {
            da_scenarios: 1,
            rt_per_da: 1,
            seed: 0,
            epsilon: 0.1,
            price_sigma,
            sigma_scales: vec![1.0],
            withholding: vec![1.0],
            toggles: vec![Toggle::Original, Toggle::Adjusted, Toggle::Capped],
            da_spread: 0.5,
            lookahead: 6,
            bid_segments: 5,
            voll: DEFAULT_VOLL,
            price_model: PriceModelConfig { scenarios: 600, bins: 12, soc_points: 51, seed: 0 },
            adjust: AdjustConfig::default(),
        }
    }

    pub fn validate(&self, horizon: usize) -> Result<()> {
        if self.da_scenarios == 0 || self.rt_per_da == 0 {
            return Err(Error::Invalid("scenario counts must be at least 1".into()));
        }
        if !(self.epsilon > 0.0 && self.epsilon < 0.5) {
            return Err(Error::Invalid(format!("epsilon {} outside (0, 0.5)", self.epsilon)));
        }
        if self.price_sigma.len() != horizon {
            return Err(Error::Dimension(format!("price sigma has {} periods, horizon is {horizon}", self.price_sigma.len())));
        }
        if self.price_sigma.iter().any(|s| !(s.is_finite() && *s >= 0.0)) {
            return Err(Error::Invalid("price sigma must be finite and >= 0".into()));
        }
        if self.sigma_scales.is_empty() || self.sigma_scales.iter().any(|s| !(s.is_finite() && *s >= 0.0)) {
            return Err(Error::Invalid("sigma scales must be a non-empty list of finite values >= 0".into()));
        }
        if self.withholding.is_empty() || self.withholding.iter().any(|w| !(w.is_finite() && *w > 0.0)) {
            return Err(Error::Invalid("withholding factors must be a non-empty list of positive values".into()));
        }
        if self.toggles.is_empty() {
            return Err(Error::Invalid("at least one toggle is required".into()));
        }
        let mut t = self.toggles.clone();
        t.sort();
        t.dedup();
        if t.len() != self.toggles.len() {
            return Err(Error::Invalid("toggles must be distinct".into()));
        }
        if self.bid_segments == 0 {
            return Err(Error::Invalid("need at least one bid segment".into()));
        }
        if !(self.da_spread.is_finite() && self.da_spread >= 0.0) || !(self.voll > 0.0) {
            return Err(Error::Invalid("da_spread must be >= 0 and voll > 0".into()));
        }
        Ok(())
    }
}

/// One result row: one (cell, σ scale, withholding factor, toggle).
#[derive(Clone, Debug, PartialEq)]
pub struct RunMetrics {
    pub da_id: usize,
    pub rt_id: usize,
    pub toggle: Toggle,
    pub sigma_scale: f64,
    pub eps: f64,
    pub withholding: f64,
    /// Generator and degradation cost plus lost load at VoLL, $.
    pub system_cost: f64,
    /// Per storage, $.
    pub profit: Vec<f64>,
    /// `(cost − hindsight) / hindsight`.
    pub gap: f64,
    /// Σ(p + b) over the day-ahead peak periods, MWh.
    pub response_mwh: f64,
    /// 1 when every storage's hindsight ceiling is within its day-ahead
    /// ceiling.
    pub coverage: f64,
    pub shed_mwh: f64,
    pub hindsight_cost: f64,
    /// Per cleared period.
    pub trajectory: Vec<PeriodRecord>,
}

impl RunMetrics {
    pub fn total_profit(&self) -> f64 {
        self.profit.iter().sum()
    }

    /// Rows with lost load are reported but left out of headline aggregates.
    pub fn flagged(&self) -> bool {
        self.shed_mwh > 0.0
    }

    fn key(&self) -> (usize, usize, u64, u64, Toggle) {
        (self.da_id, self.rt_id, self.sigma_scale.to_bits(), self.withholding.to_bits(), self.toggle)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PeriodRecord {
    pub lambda: f64,
    /// SoC after the period, per storage.
    pub soc: Vec<f64>,
    pub p: Vec<f64>,
    pub b: Vec<f64>,
    pub congestion_rent: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CellFailure {
    pub da_id: usize,
    pub rt_id: usize,
    pub message: String,
}

#[derive(Clone, Debug, Default)]
pub struct ExperimentOutput {
    pub rows: Vec<RunMetrics>,
    pub failures: Vec<CellFailure>,
}

impl ExperimentOutput {
    pub fn cells_attempted(&self) -> usize {
        let mut ids: Vec<(usize, usize)> = self.rows.iter().map(|r| (r.da_id, r.rt_id)).collect();
        ids.extend(self.failures.iter().map(|f| (f.da_id, f.rt_id)));
        ids.sort();
        ids.dedup();
        ids.len()
    }
}

/// Day-ahead stage shared by all real-time scenarios of one day.
#[derive(Clone, Debug)]
pub struct DayAhead {
    pub da_id: usize,
    pub forecast: NetloadModel,
    /// Day-ahead LMP at each storage node, `[storage][t]`.
    pub dap: Vec<Vec<f64>>,
    /// Day-ahead balance price per period.
    pub lambda: Vec<f64>,
    /// Day-ahead ceiling per storage.
    pub ceiling: Vec<f64>,
    /// Periods counted in the response metric.
    pub peak: Vec<bool>,
    /// Original policies, `[sigma scale][storage]`.
    pub original: Vec<Vec<Arc<ValueFunction>>>,
}

fn fkey(xs: &[f64]) -> Vec<u64> {
    xs.iter().map(|x| x.to_bits()).collect()
}

fn storage_key(s: &Storage) -> Vec<u64> {
    fkey(&[s.p_max, s.e_max, s.e_min, s.efficiency, s.marginal_cost])
}

fn policy_seed(plan: &ExperimentPlan, d: usize, s: usize) -> PriceModelConfig {
    PriceModelConfig { seed: derive_seed(plan.seed, &[d as u64, s as u64, 7]), ..plan.price_model }
}

/// Day-ahead forecast, prices, bound and original policies of day `d`.
pub fn prepare_day(system: &PowerSystem, netload: &NetloadModel, plan: &ExperimentPlan, d: usize) -> Result<DayAhead> {
    let mut rng = stream(plan.seed, &[d as u64, 0]);
    let mut forecast = netload.clone();
    for (n, row) in forecast.mu.iter_mut().enumerate() {
        let z: f64 = rand_distr::Distribution::sample(&rand_distr::StandardNormal, &mut rng);
        for (t, m) in row.iter_mut().enumerate() {
            *m += plan.da_spread * netload.sigma[n][t] * z;
        }
    }
    let prob = build_dispatch(system, &forecast, plan.epsilon, 0, &History::default(), ComplementarityMode::Relaxed)?;
    let sol = solve_dispatch(&prob)?;
    let horizon = system.horizon();
    let ns = system.storages.len();
    let dap: Vec<Vec<f64>> = (0..ns).map(|s| (0..horizon).map(|t| sol.storage_lmp(s, t)).collect()).collect();
    let ceiling = (0..ns).map(|s| sol.duals.theta.iter().map(|r| r[s]).fold(f64::NEG_INFINITY, f64::max)).collect();
    let lambda = sol.duals.lambda.clone();
    let mut order: Vec<usize> = (0..horizon).collect();
    order.sort_by(|a, b| lambda[*b].total_cmp(&lambda[*a]).then(a.cmp(b)));
    let mut peak = vec![false; horizon];
    for t in order.into_iter().take(horizon.div_ceil(4)) {
        peak[t] = true;
    }

    let mut original = Vec::with_capacity(plan.sigma_scales.len());
    for scale in &plan.sigma_scales {
        let sigma: Vec<f64> = plan.price_sigma.iter().map(|x| x * scale).collect();
        let mut cache: HashMap<Vec<u64>, Arc<ValueFunction>> = HashMap::new();
        let mut row = Vec::with_capacity(ns);
        for (s, st) in system.storages.iter().enumerate() {
            let cfg = policy_seed(plan, d, s);
            let mut key = storage_key(st);
            key.extend(fkey(&dap[s]));
            key.push(cfg.seed);
            let vf = match cache.get(&key) {
                Some(v) => v.clone(),
                None => {
                    let v = Arc::new(train_policy(&dap[s], &sigma, st, &cfg)?);
                    cache.insert(key, v.clone());
                    v
                }
            };
            row.push(vf);
        }
        original.push(row);
    }
    Ok(DayAhead { da_id: d, forecast, dap, lambda, ceiling, peak, original })
}

/// Realized netload of cell `(d, r)`.
pub fn realized_netload(day: &DayAhead, plan: &ExperimentPlan, r: usize) -> Result<Vec<Vec<f64>>> {
    day.forecast.sample(&mut stream(plan.seed, &[day.da_id as u64, r as u64, 1]))
}

/// Per-update adjusted policies of one storage, `[k]`.
fn adjusted_policies(
    rolling: &RollingBounds,
    day: &DayAhead,
    plan: &ExperimentPlan,
    sigma: &[f64],
    s: usize,
    st: &Storage,
    cache: &mut HashMap<Vec<u64>, Arc<AdjustedInterval>>,
) -> Result<Vec<Arc<AdjustedInterval>>> {
    let horizon = sigma.len();
    let cfg = policy_seed(plan, day.da_id, s);
    let mut out = Vec::with_capacity(horizon);
    for (k, step) in rolling.steps.iter().enumerate() {
        let theta: Vec<f64> = step.theta.iter().map(|r| r[s]).collect();
        let mut key = storage_key(st);
        key.extend(fkey(&theta));
        key.extend(fkey(&day.dap[s][k..]));
        key.extend(fkey(&sigma[k..]));
        key.push(cfg.seed);
        let adj = match cache.get(&key) {
            Some(a) => a.clone(),
            None => {
                let a = Arc::new(identify_interval(&theta, &sigma[k..], &day.dap[s][k..], st, &cfg, &plan.adjust)?);
                cache.insert(key, a.clone());
                a
            }
        };
        out.push(adj);
    }
    Ok(out)
}

/// Runs one `(d, r)` cell and returns one row per σ scale, withholding
/// factor and toggle.
pub fn run_cell(system: &PowerSystem, plan: &ExperimentPlan, day: &DayAhead, r: usize) -> Result<Vec<RunMetrics>> {
    let horizon = system.horizon();
    let ns = system.storages.len();
    let realized = realized_netload(day, plan, r)?;
    let decay = linear_decay(plan.lookahead);
    let rolling = rolling_bounds(system, &day.forecast, plan.epsilon, &realized, &decay, ComplementarityMode::Relaxed)?;

    // Hindsight optimum without reserves, so that every cleared trajectory
    // is feasible for it.
    let mut bare = system.clone();
    bare.config.reserve_ratio = 0.0;
    let hind_model = NetloadModel::deterministic(realized.clone());
    let hind = solve_dispatch(&build_dispatch(&bare, &hind_model, plan.epsilon, 0, &History::default(), ComplementarityMode::Relaxed)?)?;
    let hindsight_cost = hind.recomputed_cost(&bare);
    if !(hindsight_cost > 0.0) {
        return Err(Error::Invalid(format!("hindsight cost {hindsight_cost} is not positive")));
    }
    let coverage = (0..ns)
        .all(|s| {
            let h = rolling.hindsight.ceiling[s];
            let d = rolling.day_ahead.ceiling[s];
            h <= d + 1e-6 * (1.0 + d.abs())
        }) as u8 as f64;

    let netload_t: Vec<Vec<f64>> = (0..horizon).map(|t| realized.iter().map(|row| row[t]).collect()).collect();
    let mut rows = Vec::new();
    for (si, scale) in plan.sigma_scales.iter().enumerate() {
        let sigma: Vec<f64> = plan.price_sigma.iter().map(|x| x * scale).collect();
        let adjusted: Vec<Vec<Arc<AdjustedInterval>>> = if plan.toggles.iter().any(Toggle::adjusted) {
            let mut cache = HashMap::new();
            system
                .storages
                .iter()
                .enumerate()
                .map(|(s, st)| adjusted_policies(&rolling, day, plan, &sigma, s, st, &mut cache))
                .collect::<Result<_>>()?
        } else {
            Vec::new()
        };
        for w in &plan.withholding {
            for toggle in &plan.toggles {
                let mut state = MarketState::initial(system);
                let mut cost = 0.0;
                let mut profit = vec![0.0; ns];
                let mut response = 0.0;
                let mut shed = 0.0;
                let mut trajectory = Vec::with_capacity(horizon);
                for t in 0..horizon {
                    let bids = system
                        .storages
                        .iter()
                        .enumerate()
                        .map(|(s, st)| {
                            let mut b = if toggle.adjusted() {
                                make_bids(&adjusted[s][t].value_function, 0, None, state.e[s], st, plan.bid_segments)?
                            } else {
                                make_bids(&day.original[si][s], t, None, state.e[s], st, plan.bid_segments)?
                            };
                            if *w != 1.0 {
                                b = b.scale_discharge(*w);
                            }
                            if toggle.capped() {
                                let theta = rolling.steps[t].theta_at(s, t).expect("update t covers period t");
                                b = cap_bids(&b, theta, st);
                            }
                            Ok(b)
                        })
                        .collect::<Result<Vec<BidCurve>>>()?;
                    let c = clear_rt_market(system, &netload_t[t], &bids, &state, plan.voll)
                        .map_err(|e| Error::Infeasible(format!("period {t}, toggle {}: {e}", toggle.label())))?;
                    cost += c.dispatch_cost(system) + plan.voll * c.shed_total();
                    shed += c.shed_total();
                    for (a, x) in profit.iter_mut().zip(c.storage_profit(system)) {
                        *a += x;
                    }
                    if day.peak[t] {
                        response += c.p.iter().chain(&c.b).sum::<f64>();
                    }
                    trajectory.push(PeriodRecord {
                        lambda: c.lambda,
                        soc: c.next.e.clone(),
                        p: c.p.clone(),
                        b: c.b.clone(),
                        congestion_rent: c.congestion_rent(system, &netload_t[t]),
                    });
                    state = c.next;
                }
                rows.push(RunMetrics {
                    da_id: day.da_id,
                    rt_id: r,
                    toggle: *toggle,
                    sigma_scale: *scale,
                    eps: plan.epsilon,
                    withholding: *w,
                    system_cost: cost,
                    profit,
                    gap: (cost - hindsight_cost) / hindsight_cost,
                    response_mwh: response,
                    coverage,
                    shed_mwh: shed,
                    hindsight_cost,
                    trajectory,
                });
            }
        }
    }
    Ok(rows)
}

/// Every cell of the plan on `workers` threads (0 uses all cores). The
/// output is sorted canonically and does not depend on `workers`.
pub fn run_experiment(
    system: &PowerSystem,
    netload: &NetloadModel,
    plan: &ExperimentPlan,
    workers: usize,
) -> Result<ExperimentOutput> {
    let cells: Vec<(usize, usize)> =
        (0..plan.da_scenarios).flat_map(|d| (0..plan.rt_per_da).map(move |r| (d, r))).collect();
    run_cells(system, netload, plan, &cells, workers, &|_, _, _| {})
}

/// Runs the listed cells. `progress(d, r, ok)` is called as cells finish.
pub fn run_cells(
    system: &PowerSystem,
    netload: &NetloadModel,
    plan: &ExperimentPlan,
    cells: &[(usize, usize)],
    workers: usize,
    progress: &(dyn Fn(usize, usize, &std::result::Result<Vec<RunMetrics>, String>) + Sync),
) -> Result<ExperimentOutput> {
    plan.validate(system.horizon())?;
    let system = system.with_epsilon(plan.epsilon);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Invalid(format!("thread pool: {e}")))?;
    pool.install(|| {
        let mut days: Vec<usize> = cells.iter().map(|c| c.0).collect();
        days.sort();
        days.dedup();
        let prepared: Vec<(usize, std::result::Result<DayAhead, String>)> = days
            .par_iter()
            .map(|d| (*d, prepare_day(&system, netload, plan, *d).map_err(|e| e.to_string())))
            .collect();
        let lookup: HashMap<usize, &std::result::Result<DayAhead, String>> =
            prepared.iter().map(|(d, r)| (*d, r)).collect();
        let results: Vec<((usize, usize), std::result::Result<Vec<RunMetrics>, String>)> = cells
            .par_iter()
            .map(|&(d, r)| {
                let res = match lookup[&d] {
                    Ok(day) => run_cell(&system, plan, day, r).map_err(|e| e.to_string()),
                    Err(msg) => Err(format!("day-ahead stage: {msg}")),
                };
                progress(d, r, &res);
                ((d, r), res)
            })
            .collect();
        let mut out = ExperimentOutput::default();
        for ((d, r), res) in results {
            match res {
                Ok(rows) => out.rows.extend(rows),
                Err(message) => out.failures.push(CellFailure { da_id: d, rt_id: r, message }),
            }
        }
        out.rows.sort_by_key(|m| m.key());
        out.failures.sort_by_key(|f| (f.da_id, f.rt_id));
        Ok(out)
    })
}

pub const RESULTS_HEADER_PREFIX: &str = "da_id,rt_id,toggle,sigma_scale,eps,withholding,system_cost";

/// Results CSV; one `profit_s` column per storage.
pub fn results_csv(rows: &[RunMetrics], storages: usize) -> String {
    let mut out = String::from(RESULTS_HEADER_PREFIX);
    for s in 0..storages {
        let _ = write!(out, ",profit_{s}");
    }
    out.push_str(",gap,response_mwh,coverage,shed_mwh,hindsight_cost\n");
    for m in rows {
        let _ = write!(
            out,
            "{},{},{},{},{},{},{}",
            m.da_id,
            m.rt_id,
            m.toggle.label(),
            f6(m.sigma_scale),
            f6(m.eps),
            f6(m.withholding),
            f6(m.system_cost)
        );
        for p in &m.profit {
            let _ = write!(out, ",{}", f6(*p));
        }
        let _ = writeln!(
            out,
            ",{},{},{},{},{}",
            f6(m.gap),
            f6(m.response_mwh),
            f6(m.coverage),
            f6(m.shed_mwh),
            f6(m.hindsight_cost)
        );
    }
    out
}

/// Parses [`results_csv`] output back into rows without trajectories.
pub fn parse_results_csv(text: &str) -> Result<Vec<RunMetrics>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(text.as_bytes());
    let headers = rdr.headers()?.clone();
    let col = |name: &str| {
        headers.iter().position(|h| h == name).ok_or_else(|| Error::Parse(format!("results CSV lacks column {name}")))
    };
    let profit_cols: Vec<usize> =
        headers.iter().enumerate().filter(|(_, h)| h.starts_with("profit_")).map(|(i, _)| i).collect();
    let idx = [
        col("da_id")?,
        col("rt_id")?,
        col("toggle")?,
        col("sigma_scale")?,
        col("eps")?,
        col("withholding")?,
        col("system_cost")?,
        col("gap")?,
        col("response_mwh")?,
        col("coverage")?,
        col("shed_mwh")?,
        col("hindsight_cost")?,
    ];
    let mut rows = Vec::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let num = |i: usize| -> Result<f64> {
            rec.get(i)
                .and_then(|s| s.parse::<f64>().ok())
                .filter(|v| v.is_finite())
                .ok_or_else(|| Error::Parse(format!("row {}: column {} is not a number", line + 2, headers.get(i).unwrap_or("?"))))
        };
        let int = |i: usize| -> Result<usize> {
            rec.get(i).and_then(|s| s.parse().ok()).ok_or_else(|| Error::Parse(format!("row {}: bad index", line + 2)))
        };
        rows.push(RunMetrics {
            da_id: int(idx[0])?,
            rt_id: int(idx[1])?,
            toggle: Toggle::parse(rec.get(idx[2]).unwrap_or(""))?,
            sigma_scale: num(idx[3])?,
            eps: num(idx[4])?,
            withholding: num(idx[5])?,
            system_cost: num(idx[6])?,
            profit: profit_cols.iter().map(|i| num(*i)).collect::<Result<_>>()?,
            gap: num(idx[7])?,
            response_mwh: num(idx[8])?,
            coverage: num(idx[9])?,
            shed_mwh: num(idx[10])?,
            hindsight_cost: num(idx[11])?,
            trajectory: Vec::new(),
        });
    }
    Ok(rows)
}
