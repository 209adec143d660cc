use crate::system::Storage;
use crate::{Error, Result};

/// Piecewise-linear marginal value over an ascending SoC grid.
///
/// Outside `[grid[0], grid[last]]` the curve is `+∞` below and `-∞` above:
/// energy cannot be taken out of an empty device nor put into a full one,
/// so any action that would cross a bound is never preferred.
#[derive(Clone, Copy, Debug)]
pub struct MarginalCurve<'a> {
    pub grid: &'a [f64],
    pub v: &'a [f64],
}

impl<'a> MarginalCurve<'a> {
    pub fn new(grid: &'a [f64], v: &'a [f64]) -> Self {
        debug_assert_eq!(grid.len(), v.len());
        MarginalCurve { grid, v }
    }

    fn slack(&self) -> f64 {
        let (lo, hi) = (self.grid[0], self.grid[self.grid.len() - 1]);
        1e-12 * (hi - lo).abs().max(1.0)
    }

    pub fn eval(&self, x: f64) -> f64 {
        let n = self.grid.len();
        let (lo, hi) = (self.grid[0], self.grid[n - 1]);
        let tol = self.slack();
        if x > hi + tol {
            return f64::NEG_INFINITY;
        }
        if x < lo - tol {
            return f64::INFINITY;
        }
        if n == 1 || x <= lo {
            return self.v[0];
        }
        if x >= hi {
            return self.v[n - 1];
        }
        // last index with grid[i] <= x
        let i = self.grid.partition_point(|g| *g <= x).saturating_sub(1).min(n - 2);
        let (x0, x1) = (self.grid[i], self.grid[i + 1]);
        let w = (x - x0) / (x1 - x0);
        self.v[i] + w * (self.v[i + 1] - self.v[i])
    }

    /// Largest SoC whose marginal value is at least `y`, clamped to the grid.
    pub fn inverse(&self, y: f64) -> f64 {
        let n = self.grid.len();
        if self.v[0] < y {
            return self.grid[0];
        }
        if self.v[n - 1] >= y {
            return self.grid[n - 1];
        }
        // v is non-increasing: find the last i with v[i] >= y
        let i = self.v.partition_point(|v| *v >= y) - 1;
        let (v0, v1) = (self.v[i], self.v[i + 1]);
        let (x0, x1) = (self.grid[i], self.grid[i + 1]);
        x0 + (v0 - y) / (v0 - v1) * (x1 - x0)
    }

    pub fn check_monotone(&self, rel_tol: f64) -> Result<()> {
        let scale = self.v.iter().fold(0.0f64, |m, x| m.max(x.abs())).max(1e-300);
        for (i, w) in self.v.windows(2).enumerate() {
            if !w[0].is_finite() || !w[1].is_finite() {
                return Err(Error::NonMonotone(format!("non-finite value near SoC index {i}")));
            }
            if w[1] > w[0] + rel_tol * scale {
                return Err(Error::NonMonotone(format!("v[{}] = {} > v[{i}] = {}", i + 1, w[1], w[0])));
            }
        }
        Ok(())
    }
}

/// The four price breakpoints at SoC `e`:
/// `c1 = v(e + P̄η)η`, `c2 = v(e)η`, `c3 = [v(e)/η + M]⁺`, `c4 = [v(e − P̄/η)/η + M]⁺`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Thresholds {
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
    pub c4: f64,
}

pub fn thresholds(v: &MarginalCurve<'_>, e: f64, storage: &Storage) -> Thresholds {
    let (p, eta, m) = (storage.p_max, storage.efficiency, storage.marginal_cost);
    let ve = v.eval(e);
    Thresholds {
        c1: v.eval(e + p * eta) * eta,
        c2: ve * eta,
        c3: (ve / eta + m).max(0.0),
        c4: (v.eval(e - p / eta) / eta + m).max(0.0),
    }
}

/// Which branch of the stage rule applies at a given price.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, serde::Serialize)]
pub enum TriggerCase {
    ChargeFull,
    ChargePartial,
    Idle,
    DischargePartial,
    DischargeFull,
}

impl TriggerCase {
    pub fn classify(lambda: f64, th: &Thresholds) -> Self {
        if lambda <= th.c1 {
            TriggerCase::ChargeFull
        } else if lambda <= th.c2 {
            TriggerCase::ChargePartial
        } else if lambda <= th.c3 || lambda < 0.0 {
            TriggerCase::Idle
        } else if lambda <= th.c4 {
            TriggerCase::DischargePartial
        } else {
            TriggerCase::DischargeFull
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            TriggerCase::ChargeFull => "charge_full",
            TriggerCase::ChargePartial => "charge_partial",
            TriggerCase::Idle => "idle",
            TriggerCase::DischargePartial => "discharge_partial",
            TriggerCase::DischargeFull => "discharge_full",
        }
    }
}

/// Marginal stage value at one SoC for a known price.
pub fn stage_marginal_at(v: &MarginalCurve<'_>, e: f64, lambda: f64, storage: &Storage) -> f64 {
    let (p, eta, m) = (storage.p_max, storage.efficiency, storage.marginal_cost);
    let th = thresholds(v, e, storage);
    match TriggerCase::classify(lambda, &th) {
        TriggerCase::ChargeFull => v.eval(e + p * eta),
        TriggerCase::ChargePartial => lambda / eta,
        TriggerCase::Idle => v.eval(e),
        TriggerCase::DischargePartial => (lambda - m) * eta,
        TriggerCase::DischargeFull => v.eval(e - p / eta),
    }
}

/// Marginal stage value `q(e)` on every grid point of `v_next` for price `lambda`.
pub fn stage_marginal(v_next: &MarginalCurve<'_>, lambda: f64, storage: &Storage) -> Result<Vec<f64>> {
    if !lambda.is_finite() {
        return Err(Error::Invalid(format!("price {lambda} is not finite")));
    }
    v_next.check_monotone(1e-8)?;
    Ok(v_next.grid.iter().map(|&e| stage_marginal_at(v_next, e, lambda, storage)).collect())
}
