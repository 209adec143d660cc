//! Chance-constrained economic dispatch over a window `[k, T)` with the
//! realized operations of periods `< k` fixed.
//!
//! Each chance constraint is enforced individually through the netload
//! quantile: the balance right-hand side is `Σμ + z·σ_Σ`, each line limit
//! is tightened by `z·σ_l` on both sides and the reserve requirement is
//! `ρ(Σμ + z·σ_Σ)`, with `z = Φ⁻¹(1 − ε)` and `σ_Σ`, `σ_l` the standard
//! deviations of the summed and PTDF-weighted netload.
//!
//! Row signs are chosen so every multiplier is the textbook one:
//! stationarity in `p` reads `M − λ + Σπ(ω̄ − ω̲) − β̲ + β̄ + θ/η = 0`, which
//! makes `θ` the nonnegative opportunity cost of stored energy. The
//! envelope-theorem form `θ = −v` found in derivations that attach the
//! SoC multiplier with the opposite sign is the same quantity negated.

mod bounds;

pub use bounds::{
    bound_formula_check, bounds_csv, conditional_netload, extract_bounds, linear_decay, rolling_bounds, BoundCheck,
    BoundSeries, Branch,
    Provenance, RollingBounds,
};

use crate::price::normal_quantile;
use crate::qp::{ClarabelSolver, KktResiduals, QpProblem, QpSolver, QpStatus};
use crate::system::{NetloadModel, PowerSystem};
use crate::{Error, Result};

pub const PRIMAL_TOL: f64 = 1e-6;
pub const DUAL_TOL: f64 = 1e-6;
pub const COMP_TOL: f64 = 1e-5;
/// Simultaneous charge/discharge product that triggers a fix in
/// fix-and-resolve mode.
pub const SIMULTANEOUS_TOL: f64 = 1e-4;
const MAX_FIX_ROUNDS: usize = 3;
const HISTORY_TOL: f64 = 1e-6;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum ComplementarityMode {
    /// Drop `p ⊥ b`.
    #[default]
    Relaxed,
    /// Solve relaxed, then force the smaller of any simultaneous pair to
    /// zero and re-solve.
    FixAndResolve,
}

/// Realized operations for periods `0..k`, indexed `[t][unit]`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct History {
    pub g: Vec<Vec<f64>>,
    pub p: Vec<Vec<f64>>,
    pub b: Vec<Vec<f64>>,
    pub e: Vec<Vec<f64>>,
}

impl History {
    pub fn len(&self) -> usize {
        self.e.len()
    }

    pub fn is_empty(&self) -> bool {
        self.e.is_empty()
    }

    /// Appends the first window period of `sol` as realized.
    pub fn push_first(&mut self, sol: &DispatchSolution) {
        self.g.push(sol.g[0].clone());
        self.p.push(sol.p[0].clone());
        self.b.push(sol.b[0].clone());
        self.e.push(sol.e[0].clone());
    }

    fn validate(&self, system: &PowerSystem) -> Result<()> {
        let k = self.len();
        if self.g.len() != k || self.p.len() != k || self.b.len() != k {
            return Err(Error::Dimension("history arrays differ in length".into()));
        }
        for t in 0..k {
            if self.g[t].len() != system.generators.len() || self.e[t].len() != system.storages.len() {
                return Err(Error::Dimension(format!("history period {t} has the wrong unit count")));
            }
            for (s, st) in system.storages.iter().enumerate() {
                let prev = if t == 0 { st.e_init } else { self.e[t - 1][s] };
                let want = st.next_soc(prev, self.p[t][s], self.b[t][s]);
                let scale = 1.0 + st.e_max.abs();
                if (want - self.e[t][s]).abs() > HISTORY_TOL * scale {
                    return Err(Error::Invalid(format!(
                        "history SoC of storage {s} at t={t} is {} but dynamics give {want}",
                        self.e[t][s]
                    )));
                }
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug)]
struct Layout {
    gens: usize,
    stor: usize,
    /// Nodal injection variables, present only when the network has lines.
    nodes: usize,
}

impl Layout {
    fn per(&self) -> usize {
        2 * self.gens + 3 * self.stor + self.nodes
    }
    fn g(&self, w: usize, i: usize) -> usize {
        w * self.per() + i
    }
    fn r(&self, w: usize, i: usize) -> usize {
        w * self.per() + self.gens + i
    }
    fn p(&self, w: usize, s: usize) -> usize {
        w * self.per() + 2 * self.gens + s
    }
    fn b(&self, w: usize, s: usize) -> usize {
        w * self.per() + 2 * self.gens + self.stor + s
    }
    fn e(&self, w: usize, s: usize) -> usize {
        w * self.per() + 2 * self.gens + 2 * self.stor + s
    }
    fn inj(&self, w: usize, n: usize) -> usize {
        w * self.per() + 2 * self.gens + 3 * self.stor + n
    }
}

/// Row index of every constraint family, `[window period][unit]`.
#[derive(Clone, Debug, Default)]
struct Rows {
    theta: Vec<Vec<usize>>,
    balance: Vec<usize>,
    flow_hi: Vec<Vec<usize>>,
    flow_lo: Vec<Vec<usize>>,
    nu_lo: Vec<Vec<usize>>,
    nu_hi: Vec<Vec<usize>>,
    r_lo: Vec<Vec<usize>>,
    reserve: Vec<usize>,
    kappa_hi: Vec<Vec<Option<usize>>>,
    kappa_lo: Vec<Vec<Option<usize>>>,
    alpha_lo: Vec<Vec<usize>>,
    alpha_hi: Vec<Vec<usize>>,
    beta_lo: Vec<Vec<usize>>,
    beta_hi: Vec<Vec<usize>>,
    iota_lo: Vec<Vec<usize>>,
    iota_hi: Vec<Vec<usize>>,
}

#[derive(Clone, Copy, Debug)]
struct Include {
    flow: bool,
    ramp: bool,
}

const ALL: Include = Include { flow: true, ramp: true };

#[derive(Clone, Debug)]
pub struct DispatchProblem {
    pub system: PowerSystem,
    pub window_start: usize,
    pub epsilon: f64,
    /// Φ⁻¹(1 − ε).
    pub z: f64,
    /// Per-node quantiles μ + zσ, `[node][window period]`.
    pub quantile: Vec<Vec<f64>>,
    /// Balance right-hand side Σμ + zσ_Σ per window period.
    pub demand: Vec<f64>,
    /// Mean netload `[node][window period]`.
    pub mean: Vec<Vec<f64>>,
    /// σ of PTDF-weighted netload, `[window period][line]`.
    pub flow_sigma: Vec<Vec<f64>>,
    pub history: History,
    pub mode: ComplementarityMode,
    pub qp: QpProblem,
    layout: Layout,
    rows: Rows,
}

impl DispatchProblem {
    pub fn window_len(&self) -> usize {
        self.demand.len()
    }

    fn prev_soc(&self, s: usize) -> f64 {
        match self.history.e.last() {
            Some(e) => e[s],
            None => self.system.storages[s].e_init,
        }
    }
}

/// Builds the dispatch for periods `[window_start, T)` of `netload`.
/// Hindsight dispatch is this with a deterministic (σ ≡ 0) realized
/// netload model.
pub fn build_dispatch(
    system: &PowerSystem,
    netload: &NetloadModel,
    epsilon: f64,
    window_start: usize,
    history: &History,
    mode: ComplementarityMode,
) -> Result<DispatchProblem> {
    if !(epsilon > 0.0 && epsilon < 0.5) {
        return Err(Error::Invalid(format!("epsilon must lie in (0, 0.5), got {epsilon}")));
    }
    let horizon = netload.periods();
    if netload.nodes() != system.network.node_count {
        return Err(Error::Dimension(format!(
            "netload has {} nodes, network has {}",
            netload.nodes(),
            system.network.node_count
        )));
    }
    if window_start >= horizon {
        return Err(Error::Invalid(format!("window start {window_start} outside horizon {horizon}")));
    }
    if history.len() != window_start {
        return Err(Error::Dimension(format!("history covers {} periods, window starts at {window_start}", history.len())));
    }
    history.validate(system)?;

    let z = normal_quantile(1.0 - epsilon)?;
    let w_len = horizon - window_start;
    let nodes = system.network.node_count;
    let mut quantile = vec![vec![0.0; w_len]; nodes];
    let mut mean = vec![vec![0.0; w_len]; nodes];
    let mut demand = vec![0.0; w_len];
    let mut flow_sigma = vec![vec![0.0; system.network.lines.len()]; w_len];
    for w in 0..w_len {
        let t = window_start + w;
        for n in 0..nodes {
            mean[n][w] = netload.mu[n][t];
            quantile[n][w] = netload.mu[n][t] + z * netload.sigma[n][t];
        }
        demand[w] = netload.total_mean(t) + z * netload.total_sigma(t);
        for (l, row) in system.network.ptdf.iter().enumerate() {
            flow_sigma[w][l] = netload.weighted_sigma(t, row);
        }
        if !demand[w].is_finite() || quantile.iter().any(|r| !r[w].is_finite()) {
            return Err(Error::Invalid(format!("netload quantile at t={t} is not finite")));
        }
    }
    precheck(system, &demand, &flow_sigma, z, window_start)?;

    let mut prob = DispatchProblem {
        system: system.clone(),
        window_start,
        epsilon,
        z,
        quantile,
        demand,
        mean,
        flow_sigma,
        history: history.clone(),
        mode,
        qp: QpProblem { n: 0, p: vec![], q: vec![], c0: 0.0, a: vec![], b: vec![], n_eq: 0 },
        layout: Layout {
            gens: system.generators.len(),
            stor: system.storages.len(),
            nodes: if system.network.lines.is_empty() { 0 } else { nodes },
        },
        rows: Rows::default(),
    };
    let (qp, rows) = assemble(&prob, ALL);
    prob.qp = qp;
    prob.rows = rows;
    Ok(prob)
}

fn precheck(system: &PowerSystem, demand: &[f64], flow_sigma: &[Vec<f64>], z: f64, k: usize) -> Result<()> {
    let g_cap: f64 = system.generators.iter().map(|g| g.g_max).sum();
    let s_cap: f64 = system.storages.iter().map(|s| s.p_max).sum();
    let rho = system.config.reserve_ratio;
    for (w, d) in demand.iter().enumerate() {
        if d * (1.0 + rho) - s_cap > g_cap + 1e-9 * g_cap.max(1.0) {
            return Err(Error::Infeasible(format!(
                "balance at t={}: quantile netload {d:.3} with reserve exceeds capability {:.3}",
                k + w,
                g_cap + s_cap
            )));
        }
        for (l, sig) in flow_sigma[w].iter().enumerate() {
            let limit = system.network.lines[l].limit;
            if z * sig > limit {
                return Err(Error::Infeasible(format!(
                    "flow on line {l} at t={}: uncertainty margin {:.3} exceeds limit {limit:.3}",
                    k + w,
                    z * sig
                )));
            }
        }
    }
    Ok(())
}

fn assemble(prob: &DispatchProblem, inc: Include) -> (QpProblem, Rows) {
    let sys = &prob.system;
    let lay = prob.layout;
    let w_len = prob.window_len();
    let n = lay.per() * w_len;
    let mut p = Vec::new();
    let mut q = vec![0.0; n];
    for w in 0..w_len {
        for (i, g) in sys.generators.iter().enumerate() {
            if g.cost_quad != 0.0 {
                p.push((lay.g(w, i), lay.g(w, i), 2.0 * g.cost_quad));
            }
            q[lay.g(w, i)] = g.cost_lin;
        }
        for (s, st) in sys.storages.iter().enumerate() {
            q[lay.p(w, s)] = st.marginal_cost;
        }
    }

    let mut a = Vec::new();
    let mut b = Vec::new();
    let row = |coeffs: &[(usize, f64)], rhs: f64, a: &mut Vec<(usize, usize, f64)>, b: &mut Vec<f64>| {
        let r = b.len();
        for &(j, v) in coeffs {
            a.push((r, j, v));
        }
        b.push(rhs);
        r
    };
    let mut rows = Rows::default();

    // equalities: SoC dynamics e_t − e_{t−1} + p/η − bη = 0
    for w in 0..w_len {
        let mut th = Vec::new();
        for (s, st) in sys.storages.iter().enumerate() {
            let eta = st.efficiency;
            let mut c = vec![(lay.e(w, s), 1.0), (lay.p(w, s), 1.0 / eta), (lay.b(w, s), -eta)];
            let rhs = if w == 0 {
                prob.prev_soc(s)
            } else {
                c.push((lay.e(w - 1, s), -1.0));
                0.0
            };
            th.push(row(&c, rhs, &mut a, &mut b));
        }
        rows.theta.push(th);
    }
    // nodal injections x_n = Σg + Σ(p − b) keep the PTDF rows sparse
    for w in 0..w_len {
        for nd in 0..lay.nodes {
            let mut c = vec![(lay.inj(w, nd), 1.0)];
            for (i, g) in sys.generators.iter().enumerate() {
                if g.node == nd {
                    c.push((lay.g(w, i), -1.0));
                }
            }
            for (s, st) in sys.storages.iter().enumerate() {
                if st.node == nd {
                    c.push((lay.p(w, s), -1.0));
                    c.push((lay.b(w, s), 1.0));
                }
            }
            row(&c, 0.0, &mut a, &mut b);
        }
    }
    let n_eq = b.len();

    let z = prob.z;
    let rho = sys.config.reserve_ratio;
    for w in 0..w_len {
        // balance: −Σg − Σp + Σb ≤ −D
        let mut c: Vec<(usize, f64)> = (0..lay.gens).map(|i| (lay.g(w, i), -1.0)).collect();
        for s in 0..lay.stor {
            c.push((lay.p(w, s), -1.0));
            c.push((lay.b(w, s), 1.0));
        }
        rows.balance.push(row(&c, -prob.demand[w], &mut a, &mut b));

        let (mut hi, mut lo) = (Vec::new(), Vec::new());
        if inc.flow {
            for (l, line) in sys.network.lines.iter().enumerate() {
                let pi = &sys.network.ptdf[l];
                let c: Vec<(usize, f64)> =
                    (0..lay.nodes).filter(|&nd| pi[nd] != 0.0).map(|nd| (lay.inj(w, nd), pi[nd])).collect();
                let base: f64 = (0..pi.len()).map(|nd| pi[nd] * prob.mean[nd][w]).sum();
                let margin = z * prob.flow_sigma[w][l];
                hi.push(row(&c, line.limit + base - margin, &mut a, &mut b));
                let neg: Vec<(usize, f64)> = c.iter().map(|&(j, v)| (j, -v)).collect();
                lo.push(row(&neg, line.limit - base - margin, &mut a, &mut b));
            }
        }
        rows.flow_hi.push(hi);
        rows.flow_lo.push(lo);

        let (mut nl, mut nh, mut rl, mut kh, mut kl) = (vec![], vec![], vec![], vec![], vec![]);
        for (i, g) in sys.generators.iter().enumerate() {
            nl.push(row(&[(lay.g(w, i), -1.0)], -g.g_min, &mut a, &mut b));
            nh.push(row(&[(lay.g(w, i), 1.0), (lay.r(w, i), 1.0)], g.g_max, &mut a, &mut b));
            rl.push(row(&[(lay.r(w, i), -1.0)], 0.0, &mut a, &mut b));
            let prev = if w > 0 {
                Some((Some(lay.g(w - 1, i)), 0.0))
            } else {
                prob.history.g.last().map(|h| (None, h[i]))
            };
            match prev {
                Some((col, fixed)) if inc.ramp => {
                    let mut up = vec![(lay.g(w, i), 1.0)];
                    let mut dn = vec![(lay.g(w, i), -1.0)];
                    if let Some(j) = col {
                        up.push((j, -1.0));
                        dn.push((j, 1.0));
                    }
                    kh.push(Some(row(&up, g.ramp_up + fixed, &mut a, &mut b)));
                    kl.push(Some(row(&dn, g.ramp_down - fixed, &mut a, &mut b)));
                }
                _ => {
                    kh.push(None);
                    kl.push(None);
                }
            }
        }
        rows.nu_lo.push(nl);
        rows.nu_hi.push(nh);
        rows.r_lo.push(rl);
        rows.kappa_hi.push(kh);
        rows.kappa_lo.push(kl);

        let c: Vec<(usize, f64)> = (0..lay.gens).map(|i| (lay.r(w, i), -1.0)).collect();
        rows.reserve.push(row(&c, -rho * prob.demand[w], &mut a, &mut b));

        let (mut al, mut ah, mut bl, mut bh, mut il, mut ih) = (vec![], vec![], vec![], vec![], vec![], vec![]);
        for (s, st) in sys.storages.iter().enumerate() {
            al.push(row(&[(lay.b(w, s), -1.0)], 0.0, &mut a, &mut b));
            ah.push(row(&[(lay.b(w, s), 1.0)], st.p_max, &mut a, &mut b));
            bl.push(row(&[(lay.p(w, s), -1.0)], 0.0, &mut a, &mut b));
            bh.push(row(&[(lay.p(w, s), 1.0)], st.p_max, &mut a, &mut b));
            il.push(row(&[(lay.e(w, s), -1.0)], -st.e_min, &mut a, &mut b));
            ih.push(row(&[(lay.e(w, s), 1.0)], st.e_max, &mut a, &mut b));
        }
        rows.alpha_lo.push(al);
        rows.alpha_hi.push(ah);
        rows.beta_lo.push(bl);
        rows.beta_hi.push(bh);
        rows.iota_lo.push(il);
        rows.iota_hi.push(ih);
    }

    (QpProblem { n, p, q, c0: 0.0, a, b, n_eq }, rows)
}

/// Every multiplier of the dispatch, `[window period][unit]`. Inequality
/// multipliers are nonnegative; ramp multipliers are zero where no ramp
/// constraint exists (first period without history).
#[derive(Clone, Debug, Default, PartialEq)]
pub struct DualSet {
    pub lambda: Vec<f64>,
    pub omega_lo: Vec<Vec<f64>>,
    pub omega_hi: Vec<Vec<f64>>,
    pub nu_lo: Vec<Vec<f64>>,
    pub nu_hi: Vec<Vec<f64>>,
    pub kappa_lo: Vec<Vec<f64>>,
    pub kappa_hi: Vec<Vec<f64>>,
    pub alpha_lo: Vec<Vec<f64>>,
    pub alpha_hi: Vec<Vec<f64>>,
    pub beta_lo: Vec<Vec<f64>>,
    pub beta_hi: Vec<Vec<f64>>,
    pub iota_lo: Vec<Vec<f64>>,
    pub iota_hi: Vec<Vec<f64>>,
    pub theta: Vec<Vec<f64>>,
    pub reserve: Vec<f64>,
    /// Multipliers of r ≥ 0, kept for completeness.
    pub reserve_lo: Vec<Vec<f64>>,
}

#[derive(Clone, Debug)]
pub struct DispatchSolution {
    pub window_start: usize,
    /// `[window period][generator]`.
    pub g: Vec<Vec<f64>>,
    pub r: Vec<Vec<f64>>,
    /// `[window period][storage]`.
    pub p: Vec<Vec<f64>>,
    pub b: Vec<Vec<f64>>,
    pub e: Vec<Vec<f64>>,
    pub objective: f64,
    pub duals: DualSet,
    pub status: QpStatus,
    pub residuals: KktResiduals,
    /// Number of fix-and-resolve rounds that changed the problem.
    pub fix_rounds: usize,
    /// PTDF copy for LMP computation.
    ptdf: Vec<Vec<f64>>,
    storage_nodes: Vec<usize>,
}

impl DispatchSolution {
    pub fn window_len(&self) -> usize {
        self.g.len()
    }

    /// Σ C_i(g) + Σ M p from the primal values.
    pub fn recomputed_cost(&self, system: &PowerSystem) -> f64 {
        let mut c = 0.0;
        for w in 0..self.window_len() {
            for (i, g) in system.generators.iter().enumerate() {
                c += g.cost(self.g[w][i]);
            }
            for (s, st) in system.storages.iter().enumerate() {
                c += st.marginal_cost * self.p[w][s];
            }
        }
        c
    }

    /// λ − Σ_l π_{l,node}(ω̄ − ω̲) at window period `w`.
    pub fn lmp(&self, node: usize, w: usize) -> f64 {
        let d = &self.duals;
        let congestion: f64 = self
            .ptdf
            .iter()
            .enumerate()
            .map(|(l, row)| row[node] * (d.omega_hi[w].get(l).copied().unwrap_or(0.0) - d.omega_lo[w].get(l).copied().unwrap_or(0.0)))
            .sum();
        d.lambda[w] - congestion
    }

    pub fn storage_lmp(&self, s: usize, w: usize) -> f64 {
        self.lmp(self.storage_nodes[s], w)
    }

    /// Σ_t Σ_s min(p, b): energy that was charged and discharged in the
    /// same period.
    pub fn simultaneous_mass(&self) -> f64 {
        self.p.iter().zip(&self.b).flat_map(|(p, b)| p.iter().zip(b).map(|(x, y)| x.min(*y).max(0.0))).sum()
    }

    pub fn is_clean(&self) -> bool {
        self.residuals.within(PRIMAL_TOL, DUAL_TOL, COMP_TOL)
    }
}

/// Per-unit LMP at `node` in window period `w`.
pub fn compute_lmp(solution: &DispatchSolution, node: usize, w: usize) -> f64 {
    solution.lmp(node, w)
}

fn pick(y: &[f64], rows: &[Vec<usize>]) -> Vec<Vec<f64>> {
    rows.iter().map(|r| r.iter().map(|&i| y[i]).collect()).collect()
}

fn pick_opt(y: &[f64], rows: &[Vec<Option<usize>>]) -> Vec<Vec<f64>> {
    rows.iter().map(|r| r.iter().map(|i| i.map_or(0.0, |i| y[i])).collect()).collect()
}

fn unpack(prob: &DispatchProblem, x: &[f64], y: &[f64]) -> (Vec<Vec<f64>>, Vec<Vec<f64>>, Vec<Vec<f64>>, Vec<Vec<f64>>, Vec<Vec<f64>>, DualSet) {
    let lay = prob.layout;
    let w_len = prob.window_len();
    let grab = |f: &dyn Fn(usize, usize) -> usize, count: usize| -> Vec<Vec<f64>> {
        (0..w_len).map(|w| (0..count).map(|i| x[f(w, i)]).collect()).collect()
    };
    let g = grab(&|w, i| lay.g(w, i), lay.gens);
    let r = grab(&|w, i| lay.r(w, i), lay.gens);
    let p = grab(&|w, s| lay.p(w, s), lay.stor);
    let b = grab(&|w, s| lay.b(w, s), lay.stor);
    let e = grab(&|w, s| lay.e(w, s), lay.stor);
    let rw = &prob.rows;
    let duals = DualSet {
        lambda: rw.balance.iter().map(|&i| y[i]).collect(),
        omega_lo: pick(y, &rw.flow_lo),
        omega_hi: pick(y, &rw.flow_hi),
        nu_lo: pick(y, &rw.nu_lo),
        nu_hi: pick(y, &rw.nu_hi),
        kappa_lo: pick_opt(y, &rw.kappa_lo),
        kappa_hi: pick_opt(y, &rw.kappa_hi),
        alpha_lo: pick(y, &rw.alpha_lo),
        alpha_hi: pick(y, &rw.alpha_hi),
        beta_lo: pick(y, &rw.beta_lo),
        beta_hi: pick(y, &rw.beta_hi),
        iota_lo: pick(y, &rw.iota_lo),
        iota_hi: pick(y, &rw.iota_hi),
        theta: pick(y, &rw.theta),
        reserve: rw.reserve.iter().map(|&i| y[i]).collect(),
        reserve_lo: pick(y, &rw.r_lo),
    };
    (g, r, p, b, e, duals)
}

fn diagnose(prob: &DispatchProblem, solver: &dyn QpSolver) -> &'static str {
    let feasible = |inc: Include| {
        let (qp, _) = assemble(prob, inc);
        !matches!(solver.solve(&qp), Err(Error::Infeasible(_)))
    };
    if feasible(Include { flow: false, ramp: true }) {
        "flow limits"
    } else if feasible(Include { flow: true, ramp: false }) {
        "ramp limits"
    } else {
        "balance and reserve"
    }
}

#[derive(Clone, Copy, PartialEq)]
enum At {
    Low,
    Inside,
    High,
}

/// Bound activity of `v ∈ [lo, hi]` with multipliers `y_lo`, `y_hi`. A
/// bound counts as active when its slack is within `tol` or smaller than
/// its multiplier, which separates the two sides of an interior-point
/// solution that is not yet exactly complementary.
fn at(v: f64, lo: f64, hi: f64, y_lo: f64, y_hi: f64, tol: f64) -> At {
    let (s_lo, s_hi) = (v - lo, hi - v);
    if s_lo <= tol || (y_lo > s_lo && s_lo <= s_hi) {
        At::Low
    } else if s_hi <= tol || y_hi > s_hi {
        At::High
    } else {
        At::Inside
    }
}

/// Replaces each storage's SoC multipliers by the least trajectory that is
/// still optimal for the solved prices.
///
/// When a storage is idle at an SoC limit the multiplier is only pinned to
/// an interval, and an interior-point method returns some point inside it.
/// Holding every network multiplier fixed, the storage's own multipliers
/// form a set closed under componentwise minimum (bounds plus `θ_t ≥ θ_{t+1}`
/// type links), so its least element is well defined: the value of one more
/// unit of energy. The bound multipliers of `p`, `b` and `e` are recomputed
/// from stationarity.
fn least_theta(prob: &DispatchProblem, x: &[f64], y: &mut [f64]) {
    let lay = prob.layout;
    let w_len = prob.window_len();
    let rw = &prob.rows;
    let ptdf = &prob.system.network.ptdf;
    let lmp = |node: usize, w: usize| -> f64 {
        let cong: f64 = ptdf.iter().enumerate().map(|(l, r)| r[node] * (y[rw.flow_hi[w][l]] - y[rw.flow_lo[w][l]])).sum();
        y[rw.balance[w]] - cong
    };
    let prices: Vec<Vec<f64>> =
        prob.system.storages.iter().map(|st| (0..w_len).map(|w| lmp(st.node, w)).collect()).collect();
    for (s, st) in prob.system.storages.iter().enumerate() {
        let eta = st.efficiency;
        let ptol = 1e-6 * (1.0 + st.p_max);
        let etol = 1e-6 * (1.0 + st.e_max.abs());
        let price = &prices[s];
        let mut lo = vec![f64::NEG_INFINITY; w_len + 1];
        let mut hi = vec![f64::INFINITY; w_len + 1];
        lo[w_len] = 0.0;
        hi[w_len] = 0.0;
        // link[w]: relation between θ_w and θ_{w+1}
        let mut link = Vec::with_capacity(w_len);
        for w in 0..w_len {
            let dis = (price[w] - st.marginal_cost) * eta;
            let chg = price[w] / eta;
            match at(x[lay.p(w, s)], 0.0, st.p_max, y[rw.beta_lo[w][s]], y[rw.beta_hi[w][s]], ptol) {
                At::Low => lo[w] = lo[w].max(dis),
                At::Inside => {
                    lo[w] = lo[w].max(dis);
                    hi[w] = hi[w].min(dis);
                }
                At::High => hi[w] = hi[w].min(dis),
            }
            match at(x[lay.b(w, s)], 0.0, st.p_max, y[rw.alpha_lo[w][s]], y[rw.alpha_hi[w][s]], ptol) {
                At::Low => hi[w] = hi[w].min(chg),
                At::Inside => {
                    lo[w] = lo[w].max(chg);
                    hi[w] = hi[w].min(chg);
                }
                At::High => lo[w] = lo[w].max(chg),
            }
            link.push(at(x[lay.e(w, s)], st.e_min, st.e_max, y[rw.iota_lo[w][s]], y[rw.iota_hi[w][s]], etol));
        }
        // least fixpoint of θ ≥ lo under the links
        let mut th = lo.clone();
        loop {
            let mut moved = false;
            for w in (0..w_len).rev() {
                if matches!(link[w], At::Low | At::Inside) && th[w + 1] > th[w] {
                    th[w] = th[w + 1];
                    moved = true;
                }
            }
            for w in 0..w_len {
                if matches!(link[w], At::High | At::Inside) && th[w] > th[w + 1] {
                    th[w + 1] = th[w];
                    moved = true;
                }
            }
            if !moved {
                break;
            }
        }
        let slack = 1e-5 * (1.0 + price.iter().fold(0.0f64, |m, v| m.max(v.abs())));
        let consistent = th[w_len] <= slack && (0..w_len).all(|w| th[w].is_finite() && th[w] <= hi[w] + slack);
        if !consistent {
            continue;
        }
        for w in 0..w_len {
            let t = th[w];
            y[rw.theta[w][s]] = t;
            let d = t / eta - (price[w] - st.marginal_cost);
            y[rw.beta_lo[w][s]] = d.max(0.0);
            y[rw.beta_hi[w][s]] = (-d).max(0.0);
            let d = t * eta - price[w];
            y[rw.alpha_hi[w][s]] = d.max(0.0);
            y[rw.alpha_lo[w][s]] = (-d).max(0.0);
            let next = if w + 1 < w_len { th[w + 1] } else { 0.0 };
            y[rw.iota_lo[w][s]] = (t - next).max(0.0);
            y[rw.iota_hi[w][s]] = (next - t).max(0.0);
        }
    }
}

pub fn solve_dispatch(problem: &DispatchProblem) -> Result<DispatchSolution> {
    solve_dispatch_with(problem, &ClarabelSolver::default())
}

pub fn solve_dispatch_with(problem: &DispatchProblem, solver: &dyn QpSolver) -> Result<DispatchSolution> {
    let lay = problem.layout;
    let mut qp = problem.qp.clone();
    let mut rounds = 0;
    let mut fixed = vec![vec![false; 2 * lay.stor]; problem.window_len()];
    loop {
        let mut sol = match solver.solve(&qp) {
            Ok(s) => s,
            Err(Error::Infeasible(msg)) => {
                return Err(Error::Infeasible(format!(
                    "window starting at t={}: {msg}; likely cause: {}",
                    problem.window_start,
                    diagnose(problem, solver)
                )))
            }
            Err(e) => return Err(e),
        };
        least_theta(problem, &sol.x, &mut sol.y);
        sol.residuals = qp.residuals(&sol.x, &sol.y);
        let (g, r, p, b, e, duals) = unpack(problem, &sol.x, &sol.y);
        let mut changed = false;
        if problem.mode == ComplementarityMode::FixAndResolve && rounds < MAX_FIX_ROUNDS {
            for w in 0..problem.window_len() {
                for s in 0..lay.stor {
                    if p[w][s] * b[w][s] > SIMULTANEOUS_TOL && !fixed[w][s] && !fixed[w][lay.stor + s] {
                        let (row, slot) = if p[w][s] < b[w][s] {
                            (problem.rows.beta_hi[w][s], s)
                        } else {
                            (problem.rows.alpha_hi[w][s], lay.stor + s)
                        };
                        qp.b[row] = 0.0;
                        fixed[w][slot] = true;
                        changed = true;
                    }
                }
            }
        }
        if changed {
            rounds += 1;
            continue;
        }
        if !sol.residuals.within(PRIMAL_TOL, DUAL_TOL, COMP_TOL) {
            return Err(Error::DirtyDuals(format!(
                "window t={}: primal {:.2e}, dual {:.2e}, complementarity {:.2e}",
                problem.window_start, sol.residuals.primal, sol.residuals.dual, sol.residuals.complementarity
            )));
        }
        return Ok(DispatchSolution {
            window_start: problem.window_start,
            g,
            r,
            p,
            b,
            e,
            objective: sol.objective,
            duals,
            status: sol.status,
            residuals: sol.residuals,
            fix_rounds: rounds,
            ptdf: problem.system.network.ptdf.clone(),
            storage_nodes: problem.system.storages.iter().map(|s| s.node).collect(),
        });
    }
}
