use clarabel::algebra::CscMatrix;
use clarabel::solver::{DefaultSettingsBuilder, DefaultSolver, IPSolver, SolverStatus, SupportedConeT};

use super::{QpProblem, QpSolution, QpSolver, QpStatus};
use crate::{Error, Result};

/// Interior-point backend.
#[derive(Clone, Debug)]
pub struct ClarabelSolver {
    pub tol: f64,
    pub max_iter: u32,
    /// Accept `AlmostSolved` when the recomputed residuals still pass.
    pub accept_reduced: bool,
}

impl Default for ClarabelSolver {
    fn default() -> Self {
        ClarabelSolver { tol: 1e-10, max_iter: 300, accept_reduced: true }
    }
}

fn split(t: &[(usize, usize, f64)]) -> (Vec<usize>, Vec<usize>, Vec<f64>) {
    let mut i = Vec::with_capacity(t.len());
    let mut j = Vec::with_capacity(t.len());
    let mut v = Vec::with_capacity(t.len());
    for &(a, b, c) in t {
        i.push(a);
        j.push(b);
        v.push(c);
    }
    (i, j, v)
}

impl QpSolver for ClarabelSolver {
    fn solve(&self, qp: &QpProblem) -> Result<QpSolution> {
        qp.validate()?;
        let (pi, pj, pv) = split(&qp.p);
        let (ai, aj, av) = split(&qp.a);
        let p = CscMatrix::new_from_triplets(qp.n, qp.n, pi, pj, pv);
        let a = CscMatrix::new_from_triplets(qp.m(), qp.n, ai, aj, av);
        let mut cones = Vec::new();
        if qp.n_eq > 0 {
            cones.push(SupportedConeT::ZeroConeT(qp.n_eq));
        }
        if qp.m() > qp.n_eq {
            cones.push(SupportedConeT::NonnegativeConeT(qp.m() - qp.n_eq));
        }
        let settings = DefaultSettingsBuilder::default()
            .verbose(false)
            .max_iter(self.max_iter)
            .tol_gap_abs(self.tol)
            .tol_gap_rel(self.tol)
            .tol_feas(self.tol)
            .tol_ktratio(1e-8)
            .presolve_enable(false)
            .build()
            .map_err(|e| Error::Solver(format!("{e:?}")))?;
        let mut solver =
            DefaultSolver::new(&p, &qp.q, &a, &qp.b, &cones, settings).map_err(|e| Error::Solver(format!("{e:?}")))?;
        solver.solve();
        let status = match solver.solution.status {
            SolverStatus::Solved => QpStatus::Solved,
            SolverStatus::AlmostSolved if self.accept_reduced => QpStatus::ReducedAccuracy,
            SolverStatus::PrimalInfeasible | SolverStatus::AlmostPrimalInfeasible => {
                return Err(Error::Infeasible("solver certified primal infeasibility".into()))
            }
            s => return Err(Error::Solver(format!("{s:?}"))),
        };
        let x = solver.solution.x.clone();
        let y = solver.solution.z.clone();
        Ok(QpSolution {
            objective: qp.objective(&x),
            residuals: qp.residuals(&x, &y),
            x,
            y,
            status,
            iterations: solver.solution.iterations,
        })
    }
}
