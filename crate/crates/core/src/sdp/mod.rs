//! Storage arbitrage by backward induction on the marginal value of energy.
//!
//! `v[t]` is the marginal value of energy held at the end of period `t`,
//! conditioned on the price state observed in period `t`. The last slice is
//! the terminal value; earlier slices follow
//!
//! ```text
//! v[t](e | j) = Σ_j' P_t[j → j'] · q(e; λ_{t+1, j'}, v[t+1](· | j'))
//! ```
//!
//! where `q` is the five-case stage rule in [`stage`].

mod policy;
mod sensitivity;
pub mod stage;

pub use policy::{control_policy, expected_curve, make_bids, BidCurve, BidSegment, PolicyDecision, PriceInput};
pub use sensitivity::{sensitivity_threshold, sigma_sensitivity_analytic};
pub use stage::{stage_marginal, thresholds, MarginalCurve, Thresholds, TriggerCase};

use std::fmt::Write as _;

use rayon::prelude::*;

use crate::csvfmt::f6;
use crate::price::MarkovPriceModel;
use crate::system::Storage;
use crate::{Error, Result};

pub const DEFAULT_SOC_POINTS: usize = 101;
/// Relative tolerance of the non-increasing check on every trained slice.
pub const MONOTONE_TOL: f64 = 1e-8;

/// How value slices are conditioned on the price process.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Conditioning {
    /// One slice per price state of the current period.
    #[default]
    Markov,
    /// A single slice per period: expectation over the next period's
    /// unconditional price distribution.
    Marginal,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ValueFunction {
    pub soc_grid: Vec<f64>,
    /// T × states × N_e, $/MWh.
    pub v: Vec<Vec<Vec<f64>>>,
    pub storage_ref: usize,
    pub conditioning: Conditioning,
    pub prices: MarkovPriceModel,
}

impl ValueFunction {
    pub fn horizon(&self) -> usize {
        self.v.len()
    }

    pub fn states(&self, t: usize) -> usize {
        self.v[t].len()
    }

    /// Slice index for price state `j` of the underlying model at period `t`.
    pub fn slice_index(&self, t: usize, j: usize) -> usize {
        match self.conditioning {
            Conditioning::Markov => j.min(self.v[t].len() - 1),
            Conditioning::Marginal => 0,
        }
    }

    pub fn curve(&self, t: usize, j: usize) -> MarginalCurve<'_> {
        MarginalCurve::new(&self.soc_grid, &self.v[t][self.slice_index(t, j)])
    }

    /// Largest marginal value over every price state and SoC point of period `t`.
    pub fn max_at(&self, t: usize) -> f64 {
        self.v[t].iter().flatten().fold(f64::NEG_INFINITY, |m, x| m.max(*x))
    }

    /// `(t, price_bin, soc, v)` rows.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,price_bin,soc,v\n");
        for (t, slices) in self.v.iter().enumerate() {
            for (j, row) in slices.iter().enumerate() {
                for (e, v) in self.soc_grid.iter().zip(row) {
                    let _ = writeln!(out, "{t},{j},{},{}", f6(*e), f6(*v));
                }
            }
        }
        out
    }
}

pub fn uniform_soc_grid(storage: &Storage, points: usize) -> Vec<f64> {
    let (lo, hi) = (storage.e_min, storage.e_max);
    (0..points)
        .map(|i| if i + 1 == points { hi } else { lo + (hi - lo) * i as f64 / (points - 1) as f64 })
        .collect()
}

/// Backward induction with Markov conditioning.
pub fn train_value_function(
    model: &MarkovPriceModel,
    storage: &Storage,
    terminal_v: Option<&[f64]>,
    soc_grid_size: usize,
) -> Result<ValueFunction> {
    train_value_function_with(model, storage, terminal_v, soc_grid_size, Conditioning::Markov)
}

pub fn train_value_function_with(
    model: &MarkovPriceModel,
    storage: &Storage,
    terminal_v: Option<&[f64]>,
    soc_grid_size: usize,
    conditioning: Conditioning,
) -> Result<ValueFunction> {
    if soc_grid_size < 3 {
        return Err(Error::Invalid(format!("SoC grid needs at least 3 points, got {soc_grid_size}")));
    }
    if !(storage.e_max > storage.e_min) || !(storage.efficiency > 0.0 && storage.efficiency <= 1.0) {
        return Err(Error::Invalid("storage needs e_max > e_min and efficiency in (0, 1]".into()));
    }
    let t_len = model.horizon();
    if t_len == 0 {
        return Err(Error::Invalid("price model has no periods".into()));
    }
    model.check_stochastic(1e-9)?;
    let grid = uniform_soc_grid(storage, soc_grid_size);
    let terminal = match terminal_v {
        Some(v) if v.len() != soc_grid_size => {
            return Err(Error::Dimension(format!("terminal value has {} points, grid {}", v.len(), soc_grid_size)))
        }
        Some(v) => v.to_vec(),
        None => vec![0.0; soc_grid_size],
    };
    MarginalCurve::new(&grid, &terminal).check_monotone(MONOTONE_TOL)?;

    let slices_at = |t: usize| match conditioning {
        Conditioning::Markov => model.states(t),
        Conditioning::Marginal => 1,
    };
    let mut v: Vec<Vec<Vec<f64>>> = vec![Vec::new(); t_len];
    v[t_len - 1] = vec![terminal; slices_at(t_len - 1)];

    for t in (0..t_len - 1).rev() {
        let next = &v[t + 1];
        // q for every next-period price state, shared by all current states
        let q_next: Vec<Vec<f64>> = (0..model.states(t + 1))
            .into_par_iter()
            .map(|jn| {
                let slice = &next[if conditioning == Conditioning::Markov { jn } else { 0 }];
                stage_marginal(&MarginalCurve::new(&grid, slice), model.grids[t + 1][jn], storage)
            })
            .collect::<Result<_>>()?;
        let weights: Vec<Vec<f64>> = match conditioning {
            Conditioning::Markov => model.transitions[t].clone(),
            Conditioning::Marginal => vec![model.marginals[t + 1].clone()],
        };
        let current: Vec<Vec<f64>> = weights
            .iter()
            .map(|row| {
                let mut acc = vec![0.0; soc_grid_size];
                for (w, q) in row.iter().zip(&q_next) {
                    if *w != 0.0 {
                        for (a, x) in acc.iter_mut().zip(q) {
                            *a += w * x;
                        }
                    }
                }
                acc
            })
            .collect();
        for (j, slice) in current.iter().enumerate() {
            MarginalCurve::new(&grid, slice)
                .check_monotone(MONOTONE_TOL)
                .map_err(|e| Error::NonMonotone(format!("period {t}, state {j}: {e}")))?;
        }
        v[t] = current;
    }

    Ok(ValueFunction { soc_grid: grid, v, storage_ref: 0, conditioning, prices: model.clone() })
}
