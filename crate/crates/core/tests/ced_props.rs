mod common;

use common::deterministic_values;
use proptest::prelude::*;
use storage_bounds::ced::*;
use storage_bounds::price::normal_quantile;
use storage_bounds::qp::{ClarabelSolver, QpProblem, QpSolver};
use storage_bounds::rng::stream;
use storage_bounds::system::*;

const RELAXED: ComplementarityMode = ComplementarityMode::Relaxed;

fn solve(sys: &PowerSystem, nl: &NetloadModel, eps: f64) -> DispatchSolution {
    solve_dispatch(&build_dispatch(sys, nl, eps, 0, &History::default(), RELAXED).unwrap()).unwrap()
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1.0)
}

fn two_bus() -> PowerSystem {
    let line = Line { from: 0, to: 1, limit: 50.0, susceptance: Some(10.0) };
    let gen = |node, lin| Generator { node, cost_quad: 0.0, cost_lin: lin, g_max: 200.0, g_min: 0.0, ramp_up: 200.0, ramp_down: 200.0 };
    PowerSystem {
        network: Network::from_susceptances(2, vec![line], 0).unwrap(),
        generators: vec![gen(0, 10.0), gen(1, 30.0)],
        storages: vec![],
        config: SystemConfig { epsilon: 0.1, reserve_ratio: 0.0, horizon: 1, step_hours: 1.0 },
    }
}

#[test]
fn congested_two_bus_prices_match_hand_kkt() {
    // 100 MWh at bus 1 over a 50 MWh line: the cheap unit ships 50 and the
    // local unit covers the rest, so prices are 10 and 30.
    let sys = two_bus();
    let sol = solve(&sys, &NetloadModel::deterministic(vec![vec![0.0], vec![100.0]]), 0.1);
    assert!((sol.g[0][0] - 50.0).abs() < 1e-5 && (sol.g[0][1] - 50.0).abs() < 1e-5);
    assert!((sol.lmp(0, 0) - 10.0).abs() < 1e-5, "{}", sol.lmp(0, 0));
    assert!((sol.lmp(1, 0) - 30.0).abs() < 1e-5, "{}", sol.lmp(1, 0));
    assert!((sol.duals.lambda[0] - 10.0).abs() < 1e-5);
    let congestion = sol.duals.omega_hi[0][0] + sol.duals.omega_lo[0][0];
    assert!((congestion - 20.0).abs() < 1e-5);
    assert!((compute_lmp(&sol, 1, 0) - sol.lmp(1, 0)).abs() < 1e-12);
    // congestion rent equals the flow multiplier times the line limit
    let rent = sol.lmp(1, 0) * 100.0 - sol.lmp(0, 0) * sol.g[0][0] - sol.lmp(1, 0) * sol.g[0][1];
    assert!((rent - congestion * 50.0).abs() < 1e-3, "{rent}");
}

#[test]
fn line_margin_shrinks_with_uncertainty() {
    let sys = two_bus();
    let nl = NetloadModel::new(vec![vec![0.0], vec![100.0]], vec![vec![0.0], vec![10.0]]);
    let prob = build_dispatch(&sys, &nl, 0.1, 0, &History::default(), RELAXED).unwrap();
    let z = normal_quantile(0.9).unwrap();
    assert!((prob.flow_sigma[0][0] - 10.0).abs() < 1e-12);
    let sol = solve_dispatch(&prob).unwrap();
    // the flow at mean netload is held zσ below the limit, so the local
    // unit carries the whole quantile margin
    assert!((sol.g[0][1] - (50.0 + z * 10.0)).abs() < 1e-5, "{}", sol.g[0][1]);
    assert!((sol.g[0][0] - 50.0).abs() < 1e-5, "{}", sol.g[0][0]);
}

fn one_bus_storage(e_init: f64, horizon: usize) -> PowerSystem {
    PowerSystem {
        network: Network::single_node(),
        generators: vec![
            Generator { node: 0, cost_quad: 0.05, cost_lin: 10.0, g_max: 300.0, g_min: 0.0, ramp_up: 300.0, ramp_down: 300.0 },
            Generator { node: 0, cost_quad: 0.1, cost_lin: 20.0, g_max: 200.0, g_min: 0.0, ramp_up: 200.0, ramp_down: 200.0 },
        ],
        storages: vec![Storage { node: 0, p_max: 30.0, e_max: 100.0, e_min: 10.0, efficiency: 0.92, marginal_cost: 2.0, e_init }],
        config: SystemConfig { epsilon: 0.1, reserve_ratio: 0.0, horizon, step_hours: 1.0 },
    }
}

/// θ at the start of period t+1 must be a supergradient of the exact
/// value-to-go after period t, priced at the dispatch's own LMPs, wherever
/// the SoC is strictly inside its limits.
fn assert_theta_is_dp_supergradient(sys: &PowerSystem, sol: &DispatchSolution, s: usize) -> usize {
    let st = &sys.storages[s];
    let prices: Vec<f64> = (0..sol.window_len()).map(|w| sol.storage_lmp(s, w)).collect();
    let values = deterministic_values(&prices, st);
    let tol = 1e-6 * (st.e_max - st.e_min);
    let mut checked = 0;
    for t in 0..prices.len() - 1 {
        let e = sol.e[t][s];
        if e <= st.e_min + tol || e >= st.e_max - tol {
            continue;
        }
        let (left, right) = values[t].slopes(e, tol);
        let th = sol.duals.theta[t + 1][s];
        let scale = th.abs().max(1.0);
        assert!(th <= left + 1e-4 * scale && th >= right - 1e-4 * scale, "t={t} e={e} θ={th} slopes=({left}, {right})");
        checked += 1;
    }
    checked
}

#[test]
fn hindsight_theta_matches_exact_dp() {
    let load: Vec<f64> = (0..12).map(|t| 150.0 + 120.0 * ((t as f64 - 3.0) * 0.6).sin()).collect();
    let sys = one_bus_storage(55.0, 12);
    let sol = solve(&sys, &NetloadModel::deterministic(vec![load]), 0.1);
    assert!(assert_theta_is_dp_supergradient(&sys, &sol, 0) >= 3);

    let case = three_node_test_system();
    let real = case.netload.sample(&mut stream(11, &[])).unwrap();
    let sol = solve(&case.system, &NetloadModel::deterministic(real), 0.1);
    assert!(assert_theta_is_dp_supergradient(&case.system, &sol, 0) >= 3);
}

#[test]
fn zero_sigma_rolling_reproduces_hindsight() {
    let case = three_node_test_system();
    let det = case.netload.scaled(0.0);
    let rb = rolling_bounds(&case.system, &det, 0.1, &det.mu, &linear_decay(6), RELAXED).unwrap();
    for (k, step) in rb.steps.iter().enumerate() {
        for t in k..case.system.horizon() {
            let a = step.theta_at(0, t).unwrap();
            let b = rb.hindsight.theta_at(0, t).unwrap();
            assert!(rel(a, b) < 1e-6, "k={k} t={t}: {a} vs {b}");
        }
    }
    assert!(rel(rb.day_ahead.ceiling[0], rb.hindsight.ceiling[0]) < 1e-9);
}

#[test]
fn perfect_forecast_rolling_tracks_remaining_hindsight() {
    let case = three_node_test_system();
    let real = case.netload.sample(&mut stream(12, &[])).unwrap();
    let rb = rolling_bounds(&case.system, &case.netload, 0.1, &real, &|_| 0.0, RELAXED).unwrap();
    for (k, b) in rb.ceilings(0).iter().enumerate() {
        let h = rb.hindsight.ceiling_from(0, k);
        assert!((b - h).abs() / h.max(1.0) <= 1e-6, "k={k}: {b} vs {h}");
    }
}

#[test]
fn rolling_bounds_stay_below_day_ahead_on_three_node_case() {
    let case = three_node_test_system();
    let z = normal_quantile(0.9).unwrap();
    for i in 0..8 {
        let real = case.netload.sample_within(&mut stream(21, &[i]), z, &case.system.network.ptdf).unwrap();
        let rb = rolling_bounds(&case.system, &case.netload, 0.1, &real, &linear_decay(6), RELAXED).unwrap();
        let da = rb.day_ahead.ceiling[0];
        for (k, b) in rb.ceilings(0).iter().enumerate() {
            assert!(*b <= da + 1e-6, "scenario {i} k={k}: {b} > {da}");
        }
    }
}

/// Ramp limits couple periods: a lower realized netload before the peak
/// leaves units further from their peak output, so the peak price and
/// with it the rolling bound can rise above the day-ahead bound even
/// though every conditional quantile is below the day-ahead one.
#[test]
fn ramp_coupling_can_lift_rolling_bound_above_day_ahead() {
    let case = bundled_eight_zone();
    let z = normal_quantile(0.9).unwrap();
    let real = case.netload.sample_within(&mut stream(77, &[2]), z, &case.system.network.ptdf).unwrap();
    let excess = |sys: &PowerSystem| {
        let rb = rolling_bounds(sys, &case.netload, 0.1, &real, &linear_decay(6), RELAXED).unwrap();
        rb.ceilings(0).iter().map(|b| b - rb.day_ahead.ceiling[0]).fold(f64::NEG_INFINITY, f64::max)
    };
    assert!(excess(&case.system) > 1e-3);
    let mut free = case.system.clone();
    for g in &mut free.generators {
        g.ramp_up = g.g_max;
        g.ramp_down = g.g_max;
    }
    assert!(excess(&free) <= 1e-6);
}

#[test]
fn day_ahead_bound_falls_with_epsilon() {
    let case = three_node_test_system();
    let mut last = f64::INFINITY;
    for eps in [0.05, 0.1, 0.15, 0.2] {
        let sol = solve(&case.system, &case.netload, eps);
        let b = extract_bounds(&sol, 0, Provenance::DayAhead).unwrap().ceiling[0];
        assert!(b <= last + 1e-6 * last.abs().min(1e6), "ε={eps}: {b} > {last}");
        last = b;
    }
}

#[test]
fn bound_monotone_in_soc_and_uncertainty() {
    let case = three_node_test_system();
    let st = case.system.storages[0].clone();
    let mut last = f64::INFINITY;
    for f in [0.1, 0.3, 0.5, 0.7, 0.9] {
        let mut sys = case.system.clone();
        sys.storages[0].e_init = f * st.e_max;
        let b = extract_bounds(&solve(&sys, &case.netload, 0.1), 0, Provenance::DayAhead).unwrap().ceiling[0];
        assert!(b <= last + 1e-6 * b.abs().max(1.0), "SoC {f}: {b} > {last}");
        last = b;
    }
    let mut last = f64::NEG_INFINITY;
    for scale in [0.5, 1.0, 2.0, 3.0] {
        let b = extract_bounds(&solve(&case.system, &case.netload.scaled(scale), 0.1), 0, Provenance::DayAhead).unwrap().ceiling[0];
        assert!(b >= last - 1e-6 * scale, "σ×{scale}: {b} < {last}");
        last = b;
    }
}

#[test]
fn bound_formula_holds_and_discharge_binds_at_evening_peak() {
    for case in [three_node_test_system(), bundled_eight_zone()] {
        let sol = solve(&case.system, &case.netload, 0.1);
        for c in bound_formula_check(&sol, &case.system, 1e-6) {
            assert!(c.holds, "{c:?}");
        }
    }
    let case = bundled_eight_zone();
    let sol = solve(&case.system, &case.netload, 0.1);
    for c in bound_formula_check(&sol, &case.system, 1e-6) {
        assert_eq!(c.binding, Branch::Discharge);
        let peak_lmp = (0..24).map(|w| sol.storage_lmp(c.storage, w)).enumerate().fold((0, f64::MIN), |a, (w, v)| if v > a.1 { (w, v) } else { a });
        assert!((16..=21).contains(&peak_lmp.0), "peak price at t={}", peak_lmp.0);
        assert!((c.max_theta - c.discharge_value).abs() <= 1e-5 * c.discharge_value, "{c:?}");
    }
}

#[test]
fn objective_matches_recomputed_cost() {
    for case in [three_node_test_system(), bundled_eight_zone()] {
        let sol = solve(&case.system, &case.netload, 0.1);
        let c = sol.recomputed_cost(&case.system);
        assert!((sol.objective - c).abs() <= 1e-6 * c.abs(), "{} vs {c}", sol.objective);
        assert!(sol.is_clean());
    }
}

#[test]
fn dumped_dispatch_resolves_identically() {
    let case = three_node_test_system();
    let prob = build_dispatch(&case.system, &case.netload, 0.1, 0, &History::default(), RELAXED).unwrap();
    let text = prob.qp.to_dump();
    let back = QpProblem::from_dump(&text).unwrap();
    assert_eq!(back, prob.qp);
    let a = ClarabelSolver::default().solve(&prob.qp).unwrap();
    let b = ClarabelSolver::default().solve(&back).unwrap();
    assert_eq!(a.objective.to_bits(), b.objective.to_bits());
}

#[test]
fn relaxation_is_tight_on_bundled_cases() {
    for case in [three_node_test_system(), bundled_eight_zone()] {
        let relaxed = solve(&case.system, &case.netload, 0.1);
        let cap: f64 = case.system.storages.iter().map(|s| s.p_max).sum();
        assert!(relaxed.simultaneous_mass() <= 1e-3 * cap);
        let fixed = solve_dispatch(
            &build_dispatch(&case.system, &case.netload, 0.1, 0, &History::default(), ComplementarityMode::FixAndResolve).unwrap(),
        )
        .unwrap();
        let a = extract_bounds(&relaxed, 0, Provenance::DayAhead).unwrap();
        let b = extract_bounds(&fixed, 0, Provenance::DayAhead).unwrap();
        for s in 0..a.storages() {
            assert!(rel(a.ceiling[s], b.ceiling[s]) <= 1e-3, "{} vs {}", a.ceiling[s], b.ceiling[s]);
        }
    }
}

#[test]
fn fix_and_resolve_removes_forced_simultaneity() {
    // Negative prices make burning energy through round-trip losses pay.
    let mut sys = one_bus_storage(50.0, 3);
    sys.generators[0].cost_lin = -40.0;
    sys.storages[0].marginal_cost = 0.0;
    let nl = NetloadModel::deterministic(vec![vec![50.0, 60.0, 55.0]]);
    let relaxed = solve(&sys, &nl, 0.1);
    assert!(relaxed.simultaneous_mass() > 1.0, "{}", relaxed.simultaneous_mass());
    let fixed =
        solve_dispatch(&build_dispatch(&sys, &nl, 0.1, 0, &History::default(), ComplementarityMode::FixAndResolve).unwrap())
            .unwrap();
    assert!(fixed.fix_rounds >= 1);
    for w in 0..3 {
        assert!(fixed.p[w][0] * fixed.b[w][0] <= SIMULTANEOUS_TOL, "t={w}");
    }
    assert!(fixed.objective >= relaxed.objective - 1e-6 * relaxed.objective.abs());
}

#[test]
fn bounds_csv_has_one_row_per_period_and_storage() {
    let case = three_node_test_system();
    let sol = solve(&case.system, &case.netload, 0.1);
    let b = extract_bounds(&sol, 5, Provenance::Rolling(5)).unwrap();
    let text = bounds_csv(&[(3, &b)]);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "scenario_id,k,s,t,theta,B,lmp_node,lambda_eps");
    assert_eq!(lines.len(), 1 + 19);
    assert!(lines[1].starts_with("3,5,0,5,"));
    assert!(extract_bounds(&sol, 24, Provenance::Rolling(24)).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn random_one_bus_dispatch_is_consistent(
        loads in prop::collection::vec(40.0f64..350.0, 3..8),
        e_frac in 0.0f64..1.0,
        eta in 0.8f64..1.0,
        m in 0.0f64..8.0,
        sigma_frac in 0.0f64..0.1,
    ) {
        let t_len = loads.len();
        let mut sys = one_bus_storage(0.0, t_len);
        let st = &mut sys.storages[0];
        st.efficiency = eta;
        st.marginal_cost = m;
        st.e_init = st.e_min + e_frac * (st.e_max - st.e_min);
        let sigma: Vec<f64> = loads.iter().map(|l| l * sigma_frac).collect();
        let nl = NetloadModel::new(vec![loads.clone()], vec![sigma]);
        let sol = solve(&sys, &nl, 0.1);
        prop_assert!(sol.is_clean());
        for w in 0..t_len {
            // one bus: LMP is the balance multiplier
            prop_assert!((sol.lmp(0, w) - sol.duals.lambda[w]).abs() < 1e-9);
            prop_assert!(sol.duals.theta[w][0] >= -1e-6);
            let e = sol.e[w][0];
            let st = &sys.storages[0];
            prop_assert!(e >= st.e_min - 1e-6 && e <= st.e_max + 1e-6);
        }
        for c in bound_formula_check(&sol, &sys, 1e-6) {
            prop_assert!(c.holds, "{:?}", c);
        }
        let c = sol.recomputed_cost(&sys);
        prop_assert!((sol.objective - c).abs() <= 1e-6 * c.abs().max(1.0));
    }
}
