use serde::Serialize;

use super::stage::{thresholds, MarginalCurve, TriggerCase};
use super::{Conditioning, ValueFunction};
use crate::system::Storage;
use crate::{Error, Result};

/// Price seen by a price-taker in period `t`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum PriceInput {
    /// Index into the period's price grid; the price is the grid value.
    State(usize),
    /// Observed price; the slice is the state whose bin contains it.
    Raw(f64),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct PolicyDecision {
    pub p: f64,
    pub b: f64,
    pub e_next: f64,
    pub trigger_case: TriggerCase,
}

/// Price-taker decision for period `t` from SoC `e_prev`.
pub fn control_policy(
    vf: &ValueFunction,
    t: usize,
    price: PriceInput,
    e_prev: f64,
    storage: &Storage,
) -> Result<PolicyDecision> {
    if t >= vf.horizon() {
        return Err(Error::Invalid(format!("period {t} outside horizon {}", vf.horizon())));
    }
    let tol = 1e-9 * (storage.e_max - storage.e_min).abs().max(1.0);
    if !(e_prev >= storage.e_min - tol && e_prev <= storage.e_max + tol) {
        return Err(Error::Invalid(format!("SoC {e_prev} outside [{}, {}]", storage.e_min, storage.e_max)));
    }
    let e = e_prev.clamp(storage.e_min, storage.e_max);
    let (lambda, j) = match price {
        PriceInput::State(j) => {
            let g = &vf.prices.grids[t];
            if j >= g.len() {
                return Err(Error::Invalid(format!("price state {j} outside period {t}")));
            }
            (g[j], j)
        }
        PriceInput::Raw(l) if l.is_finite() => (l, vf.prices.state_of(t, l)),
        PriceInput::Raw(l) => return Err(Error::Invalid(format!("price {l} is not finite"))),
    };
    Ok(decide(&vf.curve(t, j), lambda, e, storage))
}

/// Stage decision against an explicit marginal curve.
pub fn decide(v: &MarginalCurve<'_>, lambda: f64, e: f64, storage: &Storage) -> PolicyDecision {
    let (pmax, eta, m) = (storage.p_max, storage.efficiency, storage.marginal_cost);
    let th = thresholds(v, e, storage);
    let case = TriggerCase::classify(lambda, &th);
    let (p_hat, b_hat) = match case {
        TriggerCase::ChargeFull => (0.0, pmax),
        TriggerCase::ChargePartial => (0.0, ((v.inverse(lambda / eta) - e) / eta).clamp(0.0, pmax)),
        TriggerCase::Idle => (0.0, 0.0),
        TriggerCase::DischargePartial => (((e - v.inverse((lambda - m) * eta)) * eta).clamp(0.0, pmax), 0.0),
        TriggerCase::DischargeFull => (pmax, 0.0),
    };
    let p = if lambda < 0.0 { 0.0 } else { p_hat.min(((e - storage.e_min) * eta).max(0.0)) };
    let b = b_hat.min(((storage.e_max - e) / eta).max(0.0));
    PolicyDecision { p, b, e_next: e - p / eta + b * eta, trigger_case: case }
}

/// Expected marginal curve for period `t` before its price is known,
/// given the previous period's price state (unconditional when `None`).
pub fn expected_curve(vf: &ValueFunction, t: usize, prev_state: Option<usize>) -> Vec<f64> {
    if vf.conditioning == Conditioning::Marginal || vf.states(t) == 1 {
        return vf.v[t][0].clone();
    }
    let weights = match (t, prev_state) {
        (0, _) | (_, None) => &vf.prices.marginals[t],
        (_, Some(j)) => &vf.prices.transitions[t - 1][j.min(vf.prices.states(t - 1) - 1)],
    };
    let mut acc = vec![0.0; vf.soc_grid.len()];
    for (w, slice) in weights.iter().zip(&vf.v[t]) {
        for (a, x) in acc.iter_mut().zip(slice) {
            *a += w * x;
        }
    }
    acc
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct BidSegment {
    /// MWh.
    pub quantity: f64,
    /// $/MWh.
    pub price: f64,
}

/// Step curves for one storage and one period. Discharge offers are
/// non-decreasing in cumulative quantity, charge bids non-increasing.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct BidCurve {
    pub discharge: Vec<BidSegment>,
    pub charge: Vec<BidSegment>,
}

impl BidCurve {
    pub fn discharge_quantity(&self) -> f64 {
        self.discharge.iter().map(|s| s.quantity).sum()
    }

    pub fn charge_quantity(&self) -> f64 {
        self.charge.iter().map(|s| s.quantity).sum()
    }

    pub fn is_monotone(&self) -> bool {
        self.discharge.windows(2).all(|w| w[0].price <= w[1].price)
            && self.charge.windows(2).all(|w| w[0].price >= w[1].price)
    }

    /// Multiplies every discharge offer price (withholding injection).
    pub fn scale_discharge(&self, factor: f64) -> BidCurve {
        BidCurve {
            discharge: self.discharge.iter().map(|s| BidSegment { price: s.price * factor, ..*s }).collect(),
            charge: self.charge.clone(),
        }
    }
}

/// Price-maker bids for period `t` from SoC `e_prev`, in `n_segments`
/// equal quantity blocks priced at each block's midpoint.
pub fn make_bids(
    vf: &ValueFunction,
    t: usize,
    prev_state: Option<usize>,
    e_prev: f64,
    storage: &Storage,
    n_segments: usize,
) -> Result<BidCurve> {
    if t >= vf.horizon() {
        return Err(Error::Invalid(format!("period {t} outside horizon {}", vf.horizon())));
    }
    let v = expected_curve(vf, t, prev_state);
    bids_from_curve(&MarginalCurve::new(&vf.soc_grid, &v), e_prev, storage, n_segments)
}

pub fn bids_from_curve(v: &MarginalCurve<'_>, e_prev: f64, storage: &Storage, n_segments: usize) -> Result<BidCurve> {
    if n_segments == 0 {
        return Err(Error::Invalid("need at least one bid segment".into()));
    }
    let (eta, m) = (storage.efficiency, storage.marginal_cost);
    let e = e_prev.clamp(storage.e_min, storage.e_max);
    let q_dis = storage.p_max.min((e - storage.e_min) * eta).max(0.0);
    let q_ch = storage.p_max.min((storage.e_max - e) / eta).max(0.0);
    let n = n_segments as f64;
    let mut curve = BidCurve::default();
    if q_dis > 0.0 {
        let dq = q_dis / n;
        curve.discharge = (0..n_segments)
            .map(|k| {
                let mid = (k as f64 + 0.5) * dq;
                BidSegment { quantity: dq, price: m + v.eval(e - mid / eta) / eta }
            })
            .collect();
    }
    if q_ch > 0.0 {
        let dq = q_ch / n;
        curve.charge = (0..n_segments)
            .map(|k| {
                let mid = (k as f64 + 0.5) * dq;
                BidSegment { quantity: dq, price: eta * v.eval(e + mid * eta) }
            })
            .collect();
    }
    Ok(curve)
}
