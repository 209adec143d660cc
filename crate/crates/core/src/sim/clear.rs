use crate::qp::{ClarabelSolver, QpProblem, QpSolver, Triplet};
use crate::sdp::BidCurve;
use crate::system::PowerSystem;
use crate::{Error, Result};

/// Added to every storage segment price so that a generator wins a tie at
/// equal marginal price.
pub const TIE_BREAK: f64 = 1e-3;
pub const DEFAULT_VOLL: f64 = 10_000.0;

/// Physical state carried from one cleared period to the next.
#[derive(Clone, Debug, PartialEq)]
pub struct MarketState {
    /// Previous period's generator outputs; `None` before the first period,
    /// which has no ramp constraint.
    pub g: Option<Vec<f64>>,
    pub e: Vec<f64>,
}

impl MarketState {
    pub fn initial(system: &PowerSystem) -> Self {
        MarketState { g: None, e: system.storages.iter().map(|s| s.e_init).collect() }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Clearing {
    pub g: Vec<f64>,
    /// Cleared discharge and charge per storage.
    pub p: Vec<f64>,
    pub b: Vec<f64>,
    /// Unserved netload per node.
    pub shed: Vec<f64>,
    pub lambda: f64,
    /// `[node]`.
    pub lmp: Vec<f64>,
    /// `[line]`, multipliers of the upper and lower flow limits.
    pub omega_hi: Vec<f64>,
    pub omega_lo: Vec<f64>,
    pub next: MarketState,
}

impl Clearing {
    /// Σ C(g) + Σ M p, without lost load.
    pub fn dispatch_cost(&self, system: &PowerSystem) -> f64 {
        let g: f64 = system.generators.iter().zip(&self.g).map(|(u, g)| u.cost(*g)).sum();
        let p: f64 = system.storages.iter().zip(&self.p).map(|(s, p)| s.marginal_cost * p).sum();
        g + p
    }

    pub fn shed_total(&self) -> f64 {
        self.shed.iter().sum()
    }

    /// LMP settlement minus degradation cost, per storage.
    pub fn storage_profit(&self, system: &PowerSystem) -> Vec<f64> {
        system
            .storages
            .iter()
            .enumerate()
            .map(|(s, st)| self.lmp[st.node] * (self.p[s] - self.b[s]) - st.marginal_cost * self.p[s])
            .collect()
    }

    /// Consumer payments minus generator and storage revenue.
    pub fn congestion_rent(&self, system: &PowerSystem, netload: &[f64]) -> f64 {
        let pay: f64 = netload.iter().zip(&self.shed).zip(&self.lmp).map(|((d, x), l)| (d - x) * l).sum();
        let gen: f64 = system.generators.iter().zip(&self.g).map(|(u, g)| self.lmp[u.node] * g).sum();
        let sto: f64 = system.storages.iter().enumerate().map(|(s, st)| self.lmp[st.node] * (self.p[s] - self.b[s])).sum();
        pay - gen - sto
    }
}

/// Clears one period against the storage bid curves on the realized
/// netload, with network limits, generator ramps from `prev`, and load
/// shedding priced at `voll`.
pub fn clear_rt_market(
    system: &PowerSystem,
    netload: &[f64],
    bids: &[BidCurve],
    prev: &MarketState,
    voll: f64,
) -> Result<Clearing> {
    let nodes = system.network.node_count;
    let (ng, ns) = (system.generators.len(), system.storages.len());
    if netload.len() != nodes || bids.len() != ns || prev.e.len() != ns {
        return Err(Error::Dimension("netload, bids and SoC must match the system".into()));
    }
    if prev.g.as_ref().is_some_and(|g| g.len() != ng) {
        return Err(Error::Dimension("previous generator outputs do not match the fleet".into()));
    }
    if let Some((s, _)) = bids.iter().enumerate().find(|(_, b)| !b.is_monotone()) {
        return Err(Error::Invalid(format!("bid curve of storage {s} is not monotone")));
    }
    if netload.iter().any(|d| !d.is_finite()) {
        return Err(Error::Invalid("realized netload is not finite".into()));
    }

    // Variables: g, discharge segments, charge segments, shed, injections.
    let mut dis_at = Vec::with_capacity(ns);
    let mut ch_at = Vec::with_capacity(ns);
    let mut n = ng;
    for b in bids {
        dis_at.push(n);
        n += b.discharge.len();
        ch_at.push(n);
        n += b.charge.len();
    }
    let shed0 = n;
    n += nodes;
    let lines = system.network.lines.len();
    let inj0 = n;
    if lines > 0 {
        n += nodes;
    }

    let mut p: Vec<Triplet> = Vec::new();
    let mut q = vec![0.0; n];
    for (i, u) in system.generators.iter().enumerate() {
        q[i] = u.cost_lin;
        if u.cost_quad > 0.0 {
            p.push((i, i, 2.0 * u.cost_quad));
        }
    }
    for (s, b) in bids.iter().enumerate() {
        for (k, seg) in b.discharge.iter().enumerate() {
            q[dis_at[s] + k] = seg.price + TIE_BREAK;
        }
        for (k, seg) in b.charge.iter().enumerate() {
            q[ch_at[s] + k] = -seg.price + TIE_BREAK;
        }
    }
    for x in &mut q[shed0..shed0 + nodes] {
        *x = voll;
    }

    let mut a: Vec<Triplet> = Vec::new();
    let mut rhs = Vec::new();
    let mut row = 0;
    let node_terms = |nd: usize| -> Vec<(usize, f64)> {
        let mut v = Vec::new();
        for (i, u) in system.generators.iter().enumerate() {
            if u.node == nd {
                v.push((i, 1.0));
            }
        }
        for (s, st) in system.storages.iter().enumerate() {
            if st.node == nd {
                v.extend((0..bids[s].discharge.len()).map(|k| (dis_at[s] + k, 1.0)));
                v.extend((0..bids[s].charge.len()).map(|k| (ch_at[s] + k, -1.0)));
            }
        }
        v.push((shed0 + nd, 1.0));
        v
    };
    // Balance.
    for nd in 0..nodes {
        for (j, c) in node_terms(nd) {
            a.push((row, j, c));
        }
    }
    rhs.push(netload.iter().sum());
    let balance_row = row;
    row += 1;
    if lines > 0 {
        for nd in 0..nodes {
            a.push((row, inj0 + nd, 1.0));
            for (j, c) in node_terms(nd) {
                a.push((row, j, -c));
            }
            rhs.push(-netload[nd]);
            row += 1;
        }
    }
    let n_eq = row;

    let mut le = |a: &mut Vec<Triplet>, rhs: &mut Vec<f64>, terms: &[(usize, f64)], b: f64| {
        for &(j, c) in terms {
            a.push((row, j, c));
        }
        rhs.push(b);
        row += 1;
        row - 1
    };
    let mut flow_hi = Vec::with_capacity(lines);
    let mut flow_lo = Vec::with_capacity(lines);
    for (l, line) in system.network.lines.iter().enumerate() {
        let terms: Vec<(usize, f64)> = system.network.ptdf[l]
            .iter()
            .enumerate()
            .filter(|(_, v)| **v != 0.0)
            .map(|(nd, v)| (inj0 + nd, *v))
            .collect();
        flow_hi.push(le(&mut a, &mut rhs, &terms, line.limit));
        let neg: Vec<(usize, f64)> = terms.iter().map(|(j, v)| (*j, -v)).collect();
        flow_lo.push(le(&mut a, &mut rhs, &neg, line.limit));
    }
    for (i, u) in system.generators.iter().enumerate() {
        le(&mut a, &mut rhs, &[(i, 1.0)], u.g_max);
        le(&mut a, &mut rhs, &[(i, -1.0)], -u.g_min);
        if let Some(g0) = &prev.g {
            le(&mut a, &mut rhs, &[(i, 1.0)], g0[i] + u.ramp_up);
            le(&mut a, &mut rhs, &[(i, -1.0)], u.ramp_down - g0[i]);
        }
    }
    for (s, st) in system.storages.iter().enumerate() {
        let dis: Vec<(usize, f64)> = (0..bids[s].discharge.len()).map(|k| (dis_at[s] + k, 1.0)).collect();
        let ch: Vec<(usize, f64)> = (0..bids[s].charge.len()).map(|k| (ch_at[s] + k, 1.0)).collect();
        for (k, seg) in bids[s].discharge.iter().enumerate() {
            le(&mut a, &mut rhs, &[(dis_at[s] + k, 1.0)], seg.quantity.max(0.0));
            le(&mut a, &mut rhs, &[(dis_at[s] + k, -1.0)], 0.0);
        }
        for (k, seg) in bids[s].charge.iter().enumerate() {
            le(&mut a, &mut rhs, &[(ch_at[s] + k, 1.0)], seg.quantity.max(0.0));
            le(&mut a, &mut rhs, &[(ch_at[s] + k, -1.0)], 0.0);
        }
        if !dis.is_empty() {
            le(&mut a, &mut rhs, &dis, st.p_max);
        }
        if !ch.is_empty() {
            le(&mut a, &mut rhs, &ch, st.p_max);
        }
        // SoC stays within [E̲, Ē] after the period.
        let eta = st.efficiency;
        let soc: Vec<(usize, f64)> = dis.iter().map(|(j, _)| (*j, -1.0 / eta)).chain(ch.iter().map(|(j, _)| (*j, eta))).collect();
        if !soc.is_empty() {
            le(&mut a, &mut rhs, &soc, st.e_max - prev.e[s]);
            let neg: Vec<(usize, f64)> = soc.iter().map(|(j, v)| (*j, -v)).collect();
            le(&mut a, &mut rhs, &neg, prev.e[s] - st.e_min);
        }
    }
    for (nd, d) in netload.iter().enumerate() {
        le(&mut a, &mut rhs, &[(shed0 + nd, 1.0)], d.max(0.0));
        le(&mut a, &mut rhs, &[(shed0 + nd, -1.0)], 0.0);
    }

    let qp = QpProblem { n, p, q, c0: 0.0, a, b: rhs, n_eq };
    let sol = ClarabelSolver::default()
        .solve(&qp)
        .map_err(|e| Error::Infeasible(format!("real-time clearing: {e}")))?;
    let x = &sol.x;
    let y = &sol.y;

    let lambda = -y[balance_row];
    let omega_hi: Vec<f64> = flow_hi.iter().map(|r| y[*r].max(0.0)).collect();
    let omega_lo: Vec<f64> = flow_lo.iter().map(|r| y[*r].max(0.0)).collect();
    let lmp = (0..nodes)
        .map(|nd| {
            lambda
                - system.network.ptdf.iter().enumerate().map(|(l, r)| r[nd] * (omega_hi[l] - omega_lo[l])).sum::<f64>()
        })
        .collect();
    let g: Vec<f64> = x[..ng].to_vec();
    let clean = |v: f64| if v.abs() < 1e-9 { 0.0 } else { v };
    let pdis: Vec<f64> = (0..ns).map(|s| clean((0..bids[s].discharge.len()).map(|k| x[dis_at[s] + k]).sum())).collect();
    let pch: Vec<f64> = (0..ns).map(|s| clean((0..bids[s].charge.len()).map(|k| x[ch_at[s] + k]).sum())).collect();
    let shed = x[shed0..shed0 + nodes].iter().map(|v| clean(*v).max(0.0)).collect();
    let e = system
        .storages
        .iter()
        .enumerate()
        .map(|(s, st)| st.next_soc(prev.e[s], pdis[s], pch[s]).clamp(st.e_min, st.e_max))
        .collect();
    Ok(Clearing {
        next: MarketState { g: Some(g.clone()), e },
        g,
        p: pdis,
        b: pch,
        shed,
        lambda,
        lmp,
        omega_hi,
        omega_lo,
    })
}
