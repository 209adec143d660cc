//! Sparse convex QP in the form
//!
//! ```text
//! minimize    ½ xᵀ P x + qᵀ x + c0
//! subject to  A[..n_eq] x  = b[..n_eq]
//!             A[n_eq..] x ≤ b[n_eq..]
//! ```
//!
//! with multipliers `y` such that `P x + q + Aᵀ y = 0` and `y ≥ 0` on the
//! inequality rows. Residuals are recomputed here from the returned point so
//! no backend is trusted on its own report.

mod clarabel_backend;
mod dump;

pub use clarabel_backend::ClarabelSolver;

use crate::{Error, Result};

/// Triplet `(row, col, value)`.
pub type Triplet = (usize, usize, f64);

#[derive(Clone, Debug, PartialEq)]
pub struct QpProblem {
    pub n: usize,
    /// Upper triangle of P (row ≤ col). Duplicates are summed.
    pub p: Vec<Triplet>,
    pub q: Vec<f64>,
    /// Constant added to the objective.
    pub c0: f64,
    pub a: Vec<Triplet>,
    pub b: Vec<f64>,
    pub n_eq: usize,
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct KktResiduals {
    /// Worst equality violation or positive inequality slack violation,
    /// relative to `1 + ‖b‖∞`.
    pub primal: f64,
    /// ‖Px + q + Aᵀy‖∞ relative to `1 + ‖q‖∞`, combined with the worst
    /// negative inequality multiplier.
    pub dual: f64,
    /// max |y_i (b − Ax)_i| over inequality rows, relative to `1 + |f(x)|`.
    pub complementarity: f64,
}

impl KktResiduals {
    pub fn within(&self, primal: f64, dual: f64, comp: f64) -> bool {
        self.primal <= primal && self.dual <= dual && self.complementarity <= comp
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum QpStatus {
    Solved,
    ReducedAccuracy,
}

#[derive(Clone, Debug)]
pub struct QpSolution {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub objective: f64,
    pub status: QpStatus,
    pub residuals: KktResiduals,
    pub iterations: u32,
}

pub trait QpSolver: Send + Sync {
    fn solve(&self, qp: &QpProblem) -> Result<QpSolution>;
}

impl QpProblem {
    pub fn m(&self) -> usize {
        self.b.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.q.len() != self.n {
            return Err(Error::Dimension(format!("q has {} entries for n = {}", self.q.len(), self.n)));
        }
        if self.n_eq > self.b.len() {
            return Err(Error::Dimension(format!("n_eq {} exceeds m {}", self.n_eq, self.b.len())));
        }
        for &(i, j, v) in &self.p {
            if i >= self.n || j >= self.n || i > j {
                return Err(Error::Dimension(format!("P entry ({i}, {j}) outside the upper triangle of {}", self.n)));
            }
            if !v.is_finite() {
                return Err(Error::Invalid(format!("P entry ({i}, {j}) is not finite")));
            }
        }
        for &(i, j, v) in &self.a {
            if i >= self.b.len() || j >= self.n {
                return Err(Error::Dimension(format!("A entry ({i}, {j}) outside {} × {}", self.b.len(), self.n)));
            }
            if !v.is_finite() {
                return Err(Error::Invalid(format!("A entry ({i}, {j}) is not finite")));
            }
        }
        if let Some(k) = self.q.iter().chain(&self.b).position(|v| !v.is_finite()) {
            return Err(Error::Invalid(format!("vector entry {k} of q‖b is not finite")));
        }
        if !self.c0.is_finite() {
            return Err(Error::Invalid("objective constant is not finite".into()));
        }
        Ok(())
    }

    /// ½ xᵀPx + qᵀx + c0.
    pub fn objective(&self, x: &[f64]) -> f64 {
        let mut f = self.c0 + self.q.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
        for &(i, j, v) in &self.p {
            f += if i == j { 0.5 * v * x[i] * x[i] } else { v * x[i] * x[j] };
        }
        f
    }

    pub fn a_times(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.m()];
        for &(i, j, v) in &self.a {
            out[i] += v * x[j];
        }
        out
    }

    /// P x + q + Aᵀ y.
    pub fn lagrangian_gradient(&self, x: &[f64], y: &[f64]) -> Vec<f64> {
        let mut g = self.q.clone();
        for &(i, j, v) in &self.p {
            g[i] += v * x[j];
            if i != j {
                g[j] += v * x[i];
            }
        }
        for &(i, j, v) in &self.a {
            g[j] += v * y[i];
        }
        g
    }

    pub fn residuals(&self, x: &[f64], y: &[f64]) -> KktResiduals {
        let ax = self.a_times(x);
        let bscale = 1.0 + self.b.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let qscale = 1.0 + self.q.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let fscale = 1.0 + self.objective(x).abs();
        let mut primal = 0.0f64;
        let mut dual_sign = 0.0f64;
        let mut comp = 0.0f64;
        for (i, (axi, bi)) in ax.iter().zip(&self.b).enumerate() {
            let slack = bi - axi;
            if i < self.n_eq {
                primal = primal.max(slack.abs());
            } else {
                primal = primal.max(-slack);
                dual_sign = dual_sign.max(-y[i]);
                comp = comp.max((y[i] * slack).abs());
            }
        }
        let stat = self.lagrangian_gradient(x, y).iter().fold(0.0f64, |m, v| m.max(v.abs()));
        KktResiduals {
            primal: primal / bscale,
            dual: (stat / qscale).max(dual_sign / qscale),
            complementarity: comp / fscale,
        }
    }
}
