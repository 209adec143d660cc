//! Physical and economic system description: network, generator fleet,
//! storage fleet, netload uncertainty and the dispatch configuration.
//!
//! All quantities are energy per dispatch step (MWh) and prices in $/MWh.
//! The types are plain data; [`validate_system`] checks every structural
//! invariant and is expected to run before any optimization.

mod bundled;
pub mod io;
mod ptdf;
mod sample;

pub use bundled::{bundled_eight_zone, three_node_test_system, BundledCase};
pub use ptdf::compute_ptdf;

use serde::{Deserialize, Serialize};

use crate::price::normal_quantile;

/// Tolerance for comparing a supplied PTDF with the recomputed one.
pub const PTDF_TOL: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Line {
    pub from: usize,
    pub to: usize,
    /// Flow limit F̄_l in MWh per step.
    pub limit: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub susceptance: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Network {
    pub node_count: usize,
    pub lines: Vec<Line>,
    /// Lines × nodes transfer factors.
    pub ptdf: Vec<Vec<f64>>,
    /// Slack used when the PTDF was computed from susceptances.
    pub slack: Option<usize>,
}

impl Network {
    /// Single bus, no lines.
    pub fn single_node() -> Self {
        Network { node_count: 1, lines: Vec::new(), ptdf: Vec::new(), slack: Some(0) }
    }

    pub fn with_ptdf(node_count: usize, lines: Vec<Line>, ptdf: Vec<Vec<f64>>) -> Self {
        Network { node_count, lines, ptdf, slack: None }
    }

    pub fn from_susceptances(node_count: usize, lines: Vec<Line>, slack: usize) -> crate::Result<Self> {
        let ptdf = compute_ptdf(node_count, &lines, slack)?;
        Ok(Network { node_count, lines, ptdf, slack: Some(slack) })
    }

    /// Line flows for a nodal injection vector.
    pub fn flows(&self, injection: &[f64]) -> Vec<f64> {
        self.ptdf
            .iter()
            .map(|row| row.iter().zip(injection).map(|(p, x)| p * x).sum())
            .collect()
    }

    fn is_incident(&self, node: usize) -> bool {
        self.lines.iter().any(|l| l.from == node || l.to == node)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Generator {
    pub node: usize,
    /// a_i in C(g) = a g² + b g, $/MWh².
    pub cost_quad: f64,
    /// b_i, $/MWh.
    pub cost_lin: f64,
    pub g_max: f64,
    #[serde(default)]
    pub g_min: f64,
    pub ramp_up: f64,
    pub ramp_down: f64,
}

impl Generator {
    pub fn cost(&self, g: f64) -> f64 {
        self.cost_quad * g * g + self.cost_lin * g
    }

    pub fn marginal_cost(&self, g: f64) -> f64 {
        2.0 * self.cost_quad * g + self.cost_lin
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Storage {
    pub node: usize,
    /// Power capacity per step, MWh.
    pub p_max: f64,
    pub e_max: f64,
    #[serde(default)]
    pub e_min: f64,
    /// One-way efficiency η.
    pub efficiency: f64,
    /// Degradation cost M, $/MWh discharged.
    pub marginal_cost: f64,
    pub e_init: f64,
}

impl Storage {
    /// SoC after discharging `p` and charging `b`.
    pub fn next_soc(&self, e: f64, p: f64, b: f64) -> f64 {
        e - p / self.efficiency + b * self.efficiency
    }
}

/// Per-node, per-period Gaussian netload (load minus renewables).
#[derive(Clone, Debug, PartialEq)]
pub struct NetloadModel {
    /// nodes × periods, MWh.
    pub mu: Vec<Vec<f64>>,
    /// nodes × periods, MWh.
    pub sigma: Vec<Vec<f64>>,
    /// Optional nodes × nodes correlation; independence when absent.
    pub correlation: Option<Vec<Vec<f64>>>,
}

impl NetloadModel {
    pub fn new(mu: Vec<Vec<f64>>, sigma: Vec<Vec<f64>>) -> Self {
        NetloadModel { mu, sigma, correlation: None }
    }

    pub fn deterministic(mu: Vec<Vec<f64>>) -> Self {
        let sigma = mu.iter().map(|r| vec![0.0; r.len()]).collect();
        NetloadModel { mu, sigma, correlation: None }
    }

    pub fn nodes(&self) -> usize {
        self.mu.len()
    }

    pub fn periods(&self) -> usize {
        self.mu.first().map_or(0, Vec::len)
    }

    pub fn total_mean(&self, t: usize) -> f64 {
        self.mu.iter().map(|r| r[t]).sum()
    }

    /// Standard deviation of Σ_n w_n ξ_{n,t}.
    pub fn weighted_sigma(&self, t: usize, weights: &[f64]) -> f64 {
        let scaled: Vec<f64> = self.sigma.iter().zip(weights).map(|(s, w)| s[t] * w).collect();
        let var = match &self.correlation {
            None => scaled.iter().map(|x| x * x).sum::<f64>(),
            Some(c) => {
                let mut v = 0.0;
                for (i, xi) in scaled.iter().enumerate() {
                    for (j, xj) in scaled.iter().enumerate() {
                        v += xi * c[i][j] * xj;
                    }
                }
                v
            }
        };
        var.max(0.0).sqrt()
    }

    pub fn total_sigma(&self, t: usize) -> f64 {
        self.weighted_sigma(t, &vec![1.0; self.nodes()])
    }

    /// Multiplies every σ by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        let sigma = self.sigma.iter().map(|r| r.iter().map(|s| s * factor).collect()).collect();
        NetloadModel { mu: self.mu.clone(), sigma, correlation: self.correlation.clone() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SystemConfig {
    /// Chance-constraint violation level ε.
    pub epsilon: f64,
    /// Reserve requirement ρ as a fraction of netload.
    #[serde(default)]
    pub reserve_ratio: f64,
    pub horizon: usize,
    #[serde(default = "one")]
    pub step_hours: f64,
}

fn one() -> f64 {
    1.0
}

#[derive(Clone, Debug, PartialEq)]
pub struct PowerSystem {
    pub network: Network,
    pub generators: Vec<Generator>,
    pub storages: Vec<Storage>,
    pub config: SystemConfig,
}

impl PowerSystem {
    pub fn horizon(&self) -> usize {
        self.config.horizon
    }

    pub fn with_epsilon(&self, epsilon: f64) -> Self {
        let mut s = self.clone();
        s.config.epsilon = epsilon;
        s
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum ViolationKind {
    Dimension,
    EmptyFleet,
    IsolatedNode,
    Network,
    Generator,
    Storage,
    Netload,
    Config,
    Capacity,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Violation {
    pub kind: ViolationKind,
    pub message: String,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
    /// Slack node used for PTDF computation, when known. The choice shifts
    /// how congestion is attributed between nodal prices.
    pub slack: Option<usize>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }

    fn push(&mut self, kind: ViolationKind, message: impl Into<String>) {
        self.violations.push(Violation { kind, message: message.into() });
    }
}

impl std::fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if self.passed() {
            write!(f, "pass")?;
        } else {
            writeln!(f, "{} violation(s):", self.violations.len())?;
            for v in &self.violations {
                writeln!(f, "  [{:?}] {}", v.kind, v.message)?;
            }
        }
        if let Some(s) = self.slack {
            write!(f, "\nslack node: {s}")?;
        }
        Ok(())
    }
}

fn finite(x: f64) -> bool {
    x.is_finite()
}

/// Checks every structural invariant of the system and the netload model.
///
/// A passing report also guarantees that total generator capacity covers the
/// 1−ε quantile of total netload in every period.
pub fn validate_system(system: &PowerSystem, netload: &NetloadModel) -> ValidationReport {
    use ViolationKind::*;
    let mut rep = ValidationReport { slack: system.network.slack, ..Default::default() };
    let net = &system.network;
    let n = net.node_count;
    let cfg = &system.config;

    if n == 0 {
        rep.push(Dimension, "network has zero nodes");
    }
    if !(cfg.epsilon > 0.0 && cfg.epsilon < 0.5) {
        rep.push(Config, format!("epsilon {} outside (0, 0.5)", cfg.epsilon));
    }
    if !(cfg.reserve_ratio >= 0.0) || !finite(cfg.reserve_ratio) {
        rep.push(Config, format!("reserve_ratio {} must be >= 0", cfg.reserve_ratio));
    }
    if cfg.horizon < 2 {
        rep.push(Config, format!("horizon {} must be >= 2", cfg.horizon));
    }
    if !(cfg.step_hours > 0.0) || !finite(cfg.step_hours) {
        rep.push(Config, format!("step_hours {} must be > 0", cfg.step_hours));
    }

    // network
    for (l, line) in net.lines.iter().enumerate() {
        if line.from >= n || line.to >= n {
            rep.push(Network, format!("line {l} endpoint out of range ({} -> {})", line.from, line.to));
        }
        if line.from == line.to {
            rep.push(Network, format!("line {l} is a self-loop at node {}", line.from));
        }
        if !(line.limit > 0.0) || line.limit.is_nan() {
            rep.push(Network, format!("line {l} flow limit {} must be > 0", line.limit));
        }
        if let Some(b) = line.susceptance {
            if !(b > 0.0) || !finite(b) {
                rep.push(Network, format!("line {l} susceptance {b} must be > 0"));
            }
        }
    }
    if net.ptdf.len() != net.lines.len() {
        rep.push(Dimension, format!("ptdf has {} rows for {} lines", net.ptdf.len(), net.lines.len()));
    }
    for (l, row) in net.ptdf.iter().enumerate() {
        if row.len() != n {
            rep.push(Dimension, format!("ptdf row {l} has {} columns for {n} nodes", row.len()));
        }
        for (k, &v) in row.iter().enumerate() {
            if !finite(v) || !(-1.0 - 1e-12..=1.0 + 1e-12).contains(&v) {
                rep.push(Network, format!("ptdf[{l}][{k}] = {v} outside [-1, 1]"));
            }
        }
    }
    let all_susceptances = !net.lines.is_empty() && net.lines.iter().all(|l| l.susceptance.is_some());
    if all_susceptances && rep.violations.is_empty() {
        let slack = net.slack.unwrap_or(0);
        match compute_ptdf(n, &net.lines, slack) {
            Ok(recomputed) => {
                let worst = recomputed
                    .iter()
                    .zip(&net.ptdf)
                    .flat_map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x - y).abs()))
                    .fold(0.0, f64::max);
                if worst > PTDF_TOL {
                    rep.push(
                        Network,
                        format!("supplied ptdf differs from susceptance ptdf (slack {slack}) by {worst:.3e}"),
                    );
                }
            }
            Err(e) => rep.push(Network, format!("cannot recompute ptdf: {e}")),
        }
    }

    // generators
    if system.generators.is_empty() {
        rep.push(EmptyFleet, "generator set is empty");
    }
    for (i, g) in system.generators.iter().enumerate() {
        if g.node >= n {
            rep.push(Dimension, format!("generator {i} at node {} out of range", g.node));
        }
        let vals = [g.cost_quad, g.cost_lin, g.g_max, g.g_min, g.ramp_up, g.ramp_down];
        if vals.iter().any(|v| !finite(*v)) {
            rep.push(Generator, format!("generator {i} has non-finite parameters"));
            continue;
        }
        if g.g_min < 0.0 || g.g_min > g.g_max {
            rep.push(Generator, format!("generator {i} needs 0 <= g_min ({}) <= g_max ({})", g.g_min, g.g_max));
        }
        if g.ramp_up < 0.0 || g.ramp_down < 0.0 {
            rep.push(Generator, format!("generator {i} ramp limits must be >= 0"));
        }
        if g.cost_quad < 0.0 {
            rep.push(Generator, format!("generator {i} cost_quad {} makes the cost non-convex", g.cost_quad));
        }
        if g.marginal_cost(g.g_min) < 0.0 {
            rep.push(Generator, format!("generator {i} cost is decreasing at g_min"));
        }
    }

    // storages
    for (s, st) in system.storages.iter().enumerate() {
        if st.node >= n {
            rep.push(Dimension, format!("storage {s} at node {} out of range", st.node));
        } else if n > 1 && !net.is_incident(st.node) {
            rep.push(IsolatedNode, format!("storage {s} sits at isolated node {}", st.node));
        }
        let vals = [st.p_max, st.e_max, st.e_min, st.efficiency, st.marginal_cost, st.e_init];
        if vals.iter().any(|v| !finite(*v)) {
            rep.push(Storage, format!("storage {s} has non-finite parameters"));
            continue;
        }
        if !(st.p_max > 0.0) {
            rep.push(Storage, format!("storage {s} p_max {} must be > 0", st.p_max));
        }
        if !(st.efficiency > 0.0 && st.efficiency <= 1.0) {
            rep.push(Storage, format!("storage {s} efficiency {} outside (0, 1]", st.efficiency));
        }
        if st.marginal_cost < 0.0 {
            rep.push(Storage, format!("storage {s} marginal_cost {} must be >= 0", st.marginal_cost));
        }
        if st.e_min < 0.0 || st.e_min > st.e_max {
            rep.push(Storage, format!("storage {s} needs 0 <= e_min <= e_max"));
        }
        if st.e_init < st.e_min || st.e_init > st.e_max {
            rep.push(Storage, format!("storage {s} e_init {} outside [{}, {}]", st.e_init, st.e_min, st.e_max));
        }
    }
    if n > 1 {
        for node in 0..n {
            if !net.is_incident(node) && system.storages.iter().all(|s| s.node != node) {
                rep.push(IsolatedNode, format!("node {node} has no incident line"));
            }
        }
    }

    // netload
    let t_len = cfg.horizon;
    if netload.mu.len() != n || netload.sigma.len() != n {
        rep.push(
            Dimension,
            format!("netload has {}/{} node rows (mu/sigma) for {n} nodes", netload.mu.len(), netload.sigma.len()),
        );
    }
    for (k, (mr, sr)) in netload.mu.iter().zip(&netload.sigma).enumerate() {
        if mr.len() != t_len || sr.len() != t_len {
            rep.push(Dimension, format!("netload node {k} has {}/{} periods for horizon {t_len}", mr.len(), sr.len()));
            continue;
        }
        for t in 0..t_len {
            if !finite(mr[t]) {
                rep.push(Netload, format!("mu[node {k}][t {t}] = {} is not finite", mr[t]));
            }
            if !finite(sr[t]) || sr[t] < 0.0 {
                rep.push(Netload, format!("sigma[node {k}][t {t}] = {} must be finite and >= 0", sr[t]));
            }
        }
    }
    if let Some(c) = &netload.correlation {
        let square = c.len() == n && c.iter().all(|r| r.len() == n);
        if !square {
            rep.push(Dimension, "correlation matrix must be nodes x nodes");
        } else {
            for i in 0..n {
                if (c[i][i] - 1.0).abs() > 1e-9 {
                    rep.push(Netload, format!("correlation[{i}][{i}] must be 1"));
                }
                for j in 0..n {
                    if (c[i][j] - c[j][i]).abs() > 1e-9 || !(-1.0..=1.0).contains(&c[i][j]) {
                        rep.push(Netload, format!("correlation[{i}][{j}] not symmetric or outside [-1, 1]"));
                    }
                }
            }
        }
    }

    // capacity pre-check only makes sense on a structurally sound system
    if rep.violations.is_empty() {
        let z = normal_quantile(1.0 - cfg.epsilon).unwrap_or(0.0);
        let cap: f64 = system.generators.iter().map(|g| g.g_max).sum();
        for t in 0..t_len {
            let q = netload.total_mean(t) + z * netload.total_sigma(t);
            if q > cap {
                rep.push(
                    Capacity,
                    format!("insufficient capacity at t={t}: netload quantile {q:.3} exceeds total g_max {cap:.3}"),
                );
            }
        }
    }
    rep
}
