use std::collections::BTreeMap;
use std::fmt::Write as _;

use statrs::function::gamma::ln_gamma;

use super::{RunMetrics, Toggle};
use crate::csvfmt::f6;

/// Which row attributes split the summary. The toggle always does.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Grouping {
    pub sigma_scale: bool,
    pub eps: bool,
    pub withholding: bool,
}

impl Default for Grouping {
    fn default() -> Self {
        Grouping { sigma_scale: true, eps: true, withholding: true }
    }
}

/// One toggle compared with the original policy on paired cells.
#[derive(Clone, Debug, PartialEq)]
pub struct SummaryRow {
    pub sigma_scale: Option<f64>,
    pub eps: Option<f64>,
    pub withholding: Option<f64>,
    pub toggle: Toggle,
    pub cells: usize,
    pub mean_cost_reduction_pct: f64,
    pub max_cost_reduction_pct: f64,
    pub profit_increase_pct: f64,
    pub gap_without_pct: f64,
    pub gap_with_pct: f64,
    pub response_increase_pct: f64,
    /// Share of cells whose hindsight ceiling stays within the day-ahead one.
    pub coverage: f64,
    /// One-sided sign-test p-value for "lower cost than original".
    pub cost_sign_p: f64,
    /// One-sided sign-test p-value for "higher profit than original".
    pub profit_sign_p: f64,
}

/// `P(X ≥ wins)` for `X ~ Binomial(wins + losses, 1/2)`; ties are dropped
/// before calling.
pub fn sign_test_p(wins: usize, losses: usize) -> f64 {
    let n = wins + losses;
    if n == 0 {
        return 1.0;
    }
    let ln_choose = |k: usize| ln_gamma(n as f64 + 1.0) - ln_gamma(k as f64 + 1.0) - ln_gamma((n - k) as f64 + 1.0);
    let half = (n as f64) * 0.5f64.ln();
    (wins..=n).map(|k| (ln_choose(k) + half).exp()).sum::<f64>().min(1.0)
}

fn wins_losses(pairs: &[(f64, f64)]) -> (usize, usize) {
    let mut w = 0;
    let mut l = 0;
    for (better, worse) in pairs {
        let tol = 1e-9 * (1.0 + better.abs().max(worse.abs()));
        if better - worse > tol {
            w += 1;
        } else if worse - better > tol {
            l += 1;
        }
    }
    (w, l)
}

fn mean(xs: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        0.0
    } else {
        s / n as f64
    }
}

fn pct(new: f64, base: f64) -> f64 {
    if base.abs() < 1e-12 {
        0.0
    } else {
        100.0 * (new - base) / base.abs()
    }
}

type GroupKey = (Option<u64>, Option<u64>, Option<u64>, Toggle);

/// Paired comparison of each non-original toggle with the original rows of
/// the same cell. Rows with lost load are excluded; groups left empty are
/// omitted and named in the returned notes.
pub fn summarize(rows: &[RunMetrics], grouping: Grouping) -> (Vec<SummaryRow>, Vec<String>) {
    let pick = |on: bool, x: f64| on.then_some(x.to_bits());
    let mut base: BTreeMap<(usize, usize, u64, u64, u64), &RunMetrics> = BTreeMap::new();
    for r in rows.iter().filter(|r| r.toggle == Toggle::Original) {
        base.insert((r.da_id, r.rt_id, r.sigma_scale.to_bits(), r.eps.to_bits(), r.withholding.to_bits()), r);
    }
    let mut groups: BTreeMap<GroupKey, Vec<(&RunMetrics, &RunMetrics)>> = BTreeMap::new();
    for r in rows.iter().filter(|r| r.toggle != Toggle::Original) {
        let key = (
            pick(grouping.sigma_scale, r.sigma_scale),
            pick(grouping.eps, r.eps),
            pick(grouping.withholding, r.withholding),
            r.toggle,
        );
        let entry = groups.entry(key).or_default();
        let Some(o) = base.get(&(r.da_id, r.rt_id, r.sigma_scale.to_bits(), r.eps.to_bits(), r.withholding.to_bits()))
        else {
            continue;
        };
        if !r.flagged() && !o.flagged() {
            entry.push((o, r));
        }
    }
    let mut out = Vec::new();
    let mut notes = Vec::new();
    for (key, pairs) in groups {
        let (sc, ep, wh, toggle) = key;
        let back = |b: Option<u64>| b.map(f64::from_bits);
        if pairs.is_empty() {
            notes.push(format!(
                "group sigma_scale={:?} eps={:?} withholding={:?} toggle={} has no complete pair; omitted",
                back(sc),
                back(ep),
                back(wh),
                toggle.label()
            ));
            continue;
        }
        let reductions: Vec<f64> = pairs.iter().map(|(o, x)| -pct(x.system_cost, o.system_cost)).collect();
        let po = mean(pairs.iter().map(|(o, _)| o.total_profit()));
        let px = mean(pairs.iter().map(|(_, x)| x.total_profit()));
        let ro = mean(pairs.iter().map(|(o, _)| o.response_mwh));
        let rx = mean(pairs.iter().map(|(_, x)| x.response_mwh));
        let cost_pairs: Vec<(f64, f64)> = pairs.iter().map(|(o, x)| (-x.system_cost, -o.system_cost)).collect();
        let profit_pairs: Vec<(f64, f64)> = pairs.iter().map(|(o, x)| (x.total_profit(), o.total_profit())).collect();
        let (cw, cl) = wins_losses(&cost_pairs);
        let (pw, pl) = wins_losses(&profit_pairs);
        out.push(SummaryRow {
            sigma_scale: back(sc),
            eps: back(ep),
            withholding: back(wh),
            toggle,
            cells: pairs.len(),
            mean_cost_reduction_pct: mean(reductions.iter().copied()),
            max_cost_reduction_pct: reductions.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            profit_increase_pct: pct(px, po),
            gap_without_pct: 100.0 * mean(pairs.iter().map(|(o, _)| o.gap)),
            gap_with_pct: 100.0 * mean(pairs.iter().map(|(_, x)| x.gap)),
            response_increase_pct: pct(rx, ro),
            coverage: mean(pairs.iter().map(|(o, _)| o.coverage)),
            cost_sign_p: sign_test_p(cw, cl),
            profit_sign_p: sign_test_p(pw, pl),
        });
    }
    (out, notes)
}

pub fn summary_csv(rows: &[SummaryRow]) -> String {
    let mut out = String::from(
        "sigma_scale,eps,withholding,toggle,cells,mean_cost_reduction_pct,max_cost_reduction_pct,profit_increase_pct,gap_without_pct,gap_with_pct,response_increase_pct,coverage,cost_sign_p,profit_sign_p\n",
    );
    let opt = |x: Option<f64>| x.map(f6).unwrap_or_else(|| "all".into());
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            opt(r.sigma_scale),
            opt(r.eps),
            opt(r.withholding),
            r.toggle.label(),
            r.cells,
            f6(r.mean_cost_reduction_pct),
            f6(r.max_cost_reduction_pct),
            f6(r.profit_increase_pct),
            f6(r.gap_without_pct),
            f6(r.gap_with_pct),
            f6(r.response_increase_pct),
            f6(r.coverage),
            f6(r.cost_sign_p),
            f6(r.profit_sign_p)
        );
    }
    out
}
