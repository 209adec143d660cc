//! Synthetic test systems shipped with the crate.
//!
//! `bundled_eight_zone` is an 8-node, 12-line, 76-generator system with a
//! duck-shaped netload profile, storage spread evenly over the nodes (35% of
//! peak load in power, 4 h duration) and 50% renewable nameplate.
//! `three_node_test_system` is a small ring used by the property tests.

use rand::Rng;

use super::{Generator, Line, NetloadModel, Network, PowerSystem, Storage, SystemConfig};

#[derive(Clone, Debug)]
pub struct BundledCase {
    pub system: PowerSystem,
    pub netload: NetloadModel,
    /// Baseline real-time price interval σ_{s,t} assumed by storage, $/MWh.
    pub price_sigma: Vec<f64>,
}

fn bump(t: f64, center: f64, width: f64) -> f64 {
    (-((t - center) / width).powi(2)).exp()
}

/// Fraction of peak load at hour `t`.
fn load_shape(t: usize) -> f64 {
    let t = t as f64;
    0.6 + 0.22 * bump(t, 9.0, 3.0) + 0.4 * bump(t, 18.5, 2.5) + 0.12 * bump(t, 13.0, 5.0)
}

/// Solar capacity factor at hour `t`.
fn solar_shape(t: usize) -> f64 {
    let x = (t as f64 - 6.0) / 12.0;
    if (0.0..=1.0).contains(&x) {
        0.8 * (std::f64::consts::PI * x).sin()
    } else {
        0.0
    }
}

fn wind_shape(t: usize) -> f64 {
    0.35 + 0.08 * (2.0 * std::f64::consts::PI * (t as f64 + 3.0) / 24.0).cos()
}

pub fn three_node_test_system() -> BundledCase {
    let horizon = 24;
    let lines = vec![
        Line { from: 0, to: 1, limit: 250.0, susceptance: Some(10.0) },
        Line { from: 1, to: 2, limit: 250.0, susceptance: Some(10.0) },
        Line { from: 0, to: 2, limit: 90.0, susceptance: Some(10.0) },
    ];
    let network = Network::from_susceptances(3, lines, 0).expect("ring is connected");
    let gen = |node, a, b, gmax: f64| Generator {
        node,
        cost_quad: a,
        cost_lin: b,
        g_max: gmax,
        g_min: 0.0,
        ramp_up: gmax,
        ramp_down: gmax,
    };
    let generators = vec![gen(0, 0.04, 12.0, 220.0), gen(1, 0.06, 22.0, 150.0), gen(2, 0.10, 30.0, 150.0)];
    let storages = vec![Storage {
        node: 2,
        p_max: 40.0,
        e_max: 160.0,
        e_min: 0.0,
        efficiency: 0.95,
        marginal_cost: 5.0,
        e_init: 80.0,
    }];
    let base = [150.0, 110.0, 90.0];
    let mu: Vec<Vec<f64>> =
        base.iter().map(|b| (0..horizon).map(|t| b * (0.3 + 1.5 * (load_shape(t) - 0.6))).collect()).collect();
    let sigma = mu.iter().map(|r| r.iter().map(|m| 0.05 * m).collect()).collect();
    BundledCase {
        system: PowerSystem {
            network,
            generators,
            storages,
            config: SystemConfig { epsilon: 0.1, reserve_ratio: 0.05, horizon, step_hours: 1.0 },
        },
        netload: NetloadModel::new(mu, sigma),
        price_sigma: vec![8.0; horizon],
    }
}

/// Deterministic 8-zone case; identical on every call.
pub fn bundled_eight_zone() -> BundledCase {
    let horizon = 24;
    let mut rng = crate::rng::stream(0x8_2ADE, &[]);

    let lines: Vec<Line> = [(0, 1), (1, 2), (1, 7), (1, 6), (2, 6), (6, 3), (6, 7), (6, 4), (3, 4), (4, 5), (5, 7), (3, 7)]
        .iter()
        .map(|&(from, to)| Line { from, to, limit: 2500.0, susceptance: Some(rng.gen_range(5.0..15.0)) })
        .collect();
    let network = Network::from_susceptances(8, lines, 0).expect("bundled topology is connected");

    let raw: Vec<f64> = (0..76).map(|_| rng.gen_range(100.0..600.0)).collect();
    let scale = 23_100.0 / raw.iter().sum::<f64>();
    let generators = raw
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let g_max = r * scale;
            Generator {
                node: i % 8,
                cost_quad: rng.gen_range(0.002..0.02),
                cost_lin: rng.gen_range(12.0..70.0),
                g_max,
                g_min: 0.0,
                ramp_up: 0.5 * g_max,
                ramp_down: 0.5 * g_max,
            }
        })
        .collect();

    let peak_load = 18_000.0;
    let weights = [0.10, 0.10, 0.05, 0.25, 0.08, 0.12, 0.12, 0.18];
    let renewable = 0.5 * peak_load;
    let mut mu = vec![vec![0.0; horizon]; 8];
    let mut sigma = vec![vec![0.0; horizon]; 8];
    for (n, w) in weights.iter().enumerate() {
        for t in 0..horizon {
            let load = w * peak_load * load_shape(t);
            let ren = w * renewable * (0.6 * solar_shape(t) + 0.4 * wind_shape(t));
            mu[n][t] = load - ren;
            sigma[n][t] = 0.02 * load + 0.10 * ren;
        }
    }

    let p_each = 0.35 * peak_load / 8.0;
    let storages = (0..8)
        .map(|node| Storage {
            node,
            p_max: p_each,
            e_max: 4.0 * p_each,
            e_min: 0.0,
            efficiency: 0.95,
            marginal_cost: 10.0,
            e_init: 2.0 * p_each,
        })
        .collect();

    BundledCase {
        system: PowerSystem {
            network,
            generators,
            storages,
            config: SystemConfig { epsilon: 0.1, reserve_ratio: 0.05, horizon, step_hours: 1.0 },
        },
        netload: NetloadModel::new(mu, sigma),
        price_sigma: vec![19.58; horizon],
    }
}
