use super::*;
use crate::case::fixtures::{self, bus, chain3, line};
use crate::case::{BusKind, Load, NetworkCase};
use crate::circuit::residual;

/// Slack 1∠0 feeding a lossless line x = 0.1 into a 0.5 pu resistive load.
fn two_bus() -> NetworkCase {
    NetworkCase {
        name: "two_bus".into(),
        base_mva: 100.0,
        buses: vec![bus(1, BusKind::Slack), bus(2, BusKind::PQ)],
        loads: vec![Load { bus: 2, p_nom: 0.5, q_nom: 0.0 }],
        generators: vec![fixtures::gen(1, 0.0, 1.0)],
        branches: vec![line(1, 2, 0.0, 0.1)],
    }
}

fn solved(case: &NetworkCase) -> PFSolution {
    let sol = newton_solve(case, &SplitCircuitState::flat_start(case), &SolverOptions::default());
    assert!(sol.converged, "{:?}", sol.failure);
    sol
}

#[test]
fn two_bus_matches_closed_form() {
    // Q balance at the load: V cos δ = V²; P: V sin δ / x = 0.5
    // => V⁴ - V² + (0.05)² = 0 on the high-voltage branch.
    let v2 = ((1.0 + (1.0f64 - 4.0 * 0.0025).sqrt()) / 2.0).sqrt();
    let delta = -(0.05 / v2).asin();
    let case = two_bus();
    let sol = solved(&case);
    assert!(sol.iterations <= 6, "{} iterations", sol.iterations);
    assert!(sol.residual_norm < 1e-8);
    let v = sol.state.voltage(1);
    assert!((v.norm() - v2).abs() < 1e-9 && (v.arg() - delta).abs() < 1e-9, "{v}");
    // slack supplies the whole load on a lossless line
    let s = sol.generation(&case)[0].1;
    assert!((s.re - 0.5).abs() < 1e-7, "{s}");
}

#[test]
fn exact_start_is_a_fixed_point() {
    let case = chain3();
    let sol = solved(&case);
    let again = newton_solve(&case, &sol.state, &SolverOptions::default());
    assert!(again.converged && again.iterations <= 1);
}

#[test]
fn limiting_does_not_move_the_fixed_point() {
    let case = chain3();
    let limited = solved(&case);
    let opts = SolverOptions { v_limit_delta: 1e9, ..Default::default() };
    let free = newton_solve(&case, &SplitCircuitState::flat_start(&case), &opts);
    assert!(free.converged);
    for (a, b) in limited.state.v_real.iter().chain(&limited.state.v_imag).zip(free.state.v_real.iter().chain(&free.state.v_imag)) {
        assert!((a - b).abs() < 1e-8);
    }
}

#[test]
fn limiting_clips_only_large_voltage_steps() {
    let case = chain3().scale_loads(2.0);
    let opts = SolverOptions { v_limit_delta: 0.02, trace: true, max_iter: 200, ..Default::default() };
    let sol = newton_solve(&case, &SplitCircuitState::flat_start(&case), &opts);
    assert!(sol.converged, "{:?} {:?}", sol.failure, sol.trace);
    assert!(sol.trace.iter().any(|t| t.limited > 0));
    // a tight limit costs extra iterations but reaches the same point
    let plain = solved(&case);
    assert!(sol.iterations > plain.iterations);
    for (a, b) in sol.state.magnitudes().iter().zip(plain.state.magnitudes()) {
        assert!((a - b).abs() < 1e-8);
    }
}

#[test]
fn converged_pv_buses_hold_setpoint() {
    let case = chain3();
    let sol = solved(&case);
    assert!((sol.state.voltage(1).norm() - 1.02).abs() < 1e-6);
    assert!(residual(&case, &sol.state).unwrap().iter().all(|f| f.abs() <= 1e-8));
}

#[test]
fn power_balance_and_nonnegative_losses() {
    let case = chain3();
    let sol = solved(&case);
    let gen: Complex64 = sol.generation(&case).iter().map(|g| g.1).sum();
    let (pl, ql) = case.total_load();
    let losses: Complex64 = branch_flows(&case, &sol).iter().map(|f| f.losses()).sum();
    assert!((gen.re - pl - losses.re).abs() < 1e-6);
    assert!((gen.im - ql - losses.im).abs() < 1e-6);
    assert!(losses.re >= 0.0);
}

#[test]
fn tx_levels_decrease_to_zero() {
    let opts = SolverOptions::default();
    let g = opts.tx_levels();
    assert_eq!(g.len(), 21);
    assert_eq!(g[0], 1e3);
    assert!((g[19] - 1e-3).abs() < 1e-12);
    assert_eq!(*g.last().unwrap(), 0.0);
    assert!(g.windows(2).all(|w| w[1] < w[0]));
    let lin = SolverOptions { tx_schedule: TxSchedule::Linear, tx_steps: 4, ..Default::default() }.tx_levels();
    assert_eq!(lin, vec![1e3, 750.0, 500.0, 250.0, 0.0]);
}

#[test]
fn shorted_network_sits_near_slack_voltage() {
    let case = chain3().scale_loads(3.0);
    for element in [TxElement::BranchParallel, TxElement::BusToSlack] {
        let mut circuit = Circuit::new(&case).unwrap();
        circuit.tx_level = 1e3;
        circuit.tx_element = element;
        let out =
            newton_iterate(&circuit, slack_start(&case), &SolverOptions::default(), &mut SparseLuSolver::new(), &mut Vec::new());
        assert!(out.converged);
        let vs = out.state.voltage(0);
        for k in 0..case.buses.len() {
            assert!((out.state.voltage(k) - vs).norm() < 0.05, "{element:?}");
        }
    }
}

#[test]
fn both_continuation_elements_reach_the_same_solution() {
    let case = chain3().scale_loads(2.0);
    let reference = solved(&case);
    for element in [TxElement::BranchParallel, TxElement::BusToSlack] {
        let sol = tx_stepping_solve(&case, &SolverOptions { tx_element: element, ..Default::default() });
        assert!(sol.converged, "{element:?}");
        for k in 0..case.buses.len() {
            assert!((sol.state.voltage(k) - reference.state.voltage(k)).norm() < 1e-8);
        }
    }
}

#[test]
fn tx_stepping_solves_the_original_case() {
    let case = chain3();
    let opts = SolverOptions::default();
    let sol = tx_stepping_solve(&case, &opts);
    assert!(sol.converged && sol.used_tx_stepping);
    let f = residual(&case, &sol.state).unwrap();
    assert!(inf_norm(&f) <= opts.tol);
    let direct = solved(&case);
    for (a, b) in sol.state.magnitudes().iter().zip(direct.state.magnitudes()) {
        assert!((a - b).abs() < 1e-7);
    }
}

#[test]
fn tx_stepping_reports_failing_step() {
    let case = chain3().scale_loads(100.0);
    let sol = tx_stepping_solve(&case, &SolverOptions::default());
    assert!(!sol.converged);
    assert!(matches!(sol.failure, Some(SolveFailure::TxStep { .. })), "{:?}", sol.failure);
}

#[test]
fn q_limits_within_bounds_are_untouched() {
    let case = chain3();
    let sol = solved(&case);
    let out = enforce_q_limits(&case, sol.clone(), &SolverOptions::default());
    assert_eq!(out, sol);
    assert!(out.q_limit_switches.is_empty());
}

#[test]
fn tight_q_max_clamps_and_sags_voltage() {
    let mut case = chain3();
    let unclamped = solved(&case);
    // generator 2 wants positive Q to hold 1.02; cap it below that
    assert!(unclamped.state.q_gen[0] > 0.05);
    case.generators[1].q_max = 0.05;
    let opts = SolverOptions::default();
    let out = enforce_q_limits(&case, solved(&case), &opts);
    assert!(out.converged, "{:?}", out.failure);
    assert_eq!(out.q_limit_switches, vec![QLimitSwitch { bus: 2, limit: QLimit::Max }]);
    assert_eq!(out.state.q_gen[0], 0.05);
    assert!(out.state.voltage(1).norm() < 1.02);
    assert!(inf_norm(&out.circuit(&case).unwrap().residual(&out.state).unwrap()) <= opts.tol);
    // idempotent
    let again = enforce_q_limits(&case, out.clone(), &opts);
    assert_eq!(again, out);
}

#[test]
fn q_min_clamp_raises_voltage() {
    let mut case = chain3();
    case.buses[1].v_set = 0.95;
    case.generators[1].v_set = 0.95;
    let free = solved(&case);
    assert!(free.state.q_gen[0] < -0.05);
    case.generators[1].q_min = -0.05;
    let out = robust_solve(&case, None, &SolverOptions::default());
    assert!(out.converged);
    assert_eq!(out.q_limit_switches, vec![QLimitSwitch { bus: 2, limit: QLimit::Min }]);
    assert!(out.state.voltage(1).norm() > 0.95);
}

#[test]
fn robust_solve_with_warm_start_skips_continuation() {
    let case = chain3();
    let base = solved(&case);
    let sol = robust_solve(&case.scale_loads(1.05), Some(&base.state), &SolverOptions::default());
    assert!(sol.converged && !sol.used_tx_stepping);
}

#[test]
fn robust_solve_reports_infeasible_load() {
    let case = chain3().scale_loads(100.0);
    let sol = robust_solve(&case, None, &SolverOptions::default());
    assert!(!sol.converged && sol.failure.is_some());
    assert_eq!(classify(&case, &sol, &LimitSpec::default()), OperatingClass::VoltageCollapse);
}

#[test]
fn isolated_bus_gives_singular_diagnostic() {
    let mut case = chain3();
    case.buses.push(bus(4, BusKind::PQ));
    let sol = newton_solve(&case, &SplitCircuitState::flat_start(&case), &SolverOptions::default());
    assert!(!sol.converged);
    assert!(matches!(sol.failure, Some(SolveFailure::Singular { .. })), "{:?}", sol.failure);
}

#[test]
fn trace_lines_are_recorded() {
    let case = chain3();
    let opts = SolverOptions { trace: true, ..Default::default() };
    let sol = newton_solve(&case, &SplitCircuitState::flat_start(&case), &opts);
    assert_eq!(sol.trace.len(), sol.iterations + 1);
    assert!(sol.trace.last().unwrap().residual_norm <= opts.tol);
    assert!(sol.trace[0].to_string().starts_with("iter   0"));
}

#[test]
fn options_validation() {
    assert!(SolverOptions::default().check().is_ok());
    assert!(SolverOptions { tol: 0.0, ..Default::default() }.check().is_err());
    assert!(SolverOptions { max_iter: 0, ..Default::default() }.check().is_err());
    assert!(SolverOptions { v_limit_delta: -1.0, ..Default::default() }.check().is_err());
    assert!(LimitSpec { angle_max: 4.0, ..Default::default() }.check().is_err());
}

mod classification {
    use super::*;

    fn state_with_angles(case: &NetworkCase, vm: &[f64], deg: &[f64]) -> PFSolution {
        let mut sol = solved(case);
        for k in 0..vm.len() {
            let v = Complex64::from_polar(vm[k], deg[k].to_radians());
            sol.state.v_real[k] = v.re;
            sol.state.v_imag[k] = v.im;
        }
        sol
    }

    #[test]
    fn normal_operation() {
        let case = chain3();
        assert_eq!(classify(&case, &solved(&case), &LimitSpec::default()), OperatingClass::Normal);
    }

    #[test]
    fn forced_91_degrees_is_angular() {
        let case = chain3();
        let sol = state_with_angles(&case, &[1.0, 1.0, 1.0], &[0.0, -91.0, -92.0]);
        let class = classify(&case, &sol, &LimitSpec::default());
        let refs = case.branch_refs();
        match class {
            OperatingClass::AngularUnstable(v) => assert_eq!(v.angular, vec![refs[0]]),
            other => panic!("{other:?}"),
        }
        // exactly at the limit counts as a violation
        let sol = state_with_angles(&case, &[1.0, 1.0, 1.0], &[0.0, -90.0, -90.0]);
        assert_eq!(classify(&case, &sol, &LimitSpec::default()).kind(), ClassKind::AngularUnstable);
    }

    #[test]
    fn angle_difference_wraps() {
        let case = chain3();
        let sol = state_with_angles(&case, &[1.0, 1.0, 1.0], &[170.0, -170.0, -171.0]);
        assert_eq!(classify(&case, &sol, &LimitSpec::default()), OperatingClass::Normal);
    }

    #[test]
    fn band_violation_lists_buses() {
        let case = chain3();
        let sol = state_with_angles(&case, &[1.0, 1.12, 0.85], &[0.0, -1.0, -2.0]);
        match classify(&case, &sol, &LimitSpec::default()) {
            OperatingClass::VoltageBandViolation(v) => {
                assert_eq!(v.voltage_band, vec![2, 3]);
                assert!(v.angular.is_empty());
            }
            other => panic!("{other:?}"),
        }
        let off = LimitSpec { enforce_v_band: false, ..Default::default() };
        assert_eq!(classify(&case, &sol, &off), OperatingClass::Normal);
    }

    #[test]
    fn overload_uses_rate_a() {
        let mut case = chain3();
        let sol = solved(&case);
        let flow = branch_flows(&case, &sol)[1].max_apparent();
        case.branches[1].rate_a = 0.9 * flow;
        match classify(&case, &sol, &LimitSpec::default()) {
            OperatingClass::BranchOverload(v) => assert_eq!(v.overload, vec![case.branch_refs()[1]]),
            other => panic!("{other:?}"),
        }
        case.branches[1].rate_a = 1.1 * flow;
        assert_eq!(classify(&case, &sol, &LimitSpec::default()), OperatingClass::Normal);
        case.branches[1].rate_a = 0.9 * flow;
        let off = LimitSpec { enforce_branch_rating: false, ..Default::default() };
        assert_eq!(classify(&case, &sol, &off), OperatingClass::Normal);
    }

    #[test]
    fn priority_keeps_every_violation() {
        let mut case = chain3();
        case.branches[1].rate_a = 1e-3;
        let sol = state_with_angles(&case, &[1.0, 1.15, 1.0], &[0.0, -95.0, -96.0]);
        let class = classify(&case, &sol, &LimitSpec::default());
        assert_eq!(class.kind(), ClassKind::AngularUnstable);
        let v = class.violations().unwrap();
        assert_eq!(v.angular.len(), 1);
        assert_eq!(v.voltage_band, vec![2]);
        assert!(!v.overload.is_empty());
    }

    #[test]
    fn not_converged_is_collapse() {
        let case = chain3();
        let mut sol = solved(&case);
        sol.converged = false;
        assert_eq!(classify(&case, &sol, &LimitSpec::default()), OperatingClass::VoltageCollapse);
    }

    #[test]
    fn class_names_round_trip() {
        for k in ClassKind::ALL {
            assert_eq!(ClassKind::parse(k.name()), Some(k));
        }
        assert_eq!(ClassKind::parse("Collapse"), Some(ClassKind::VoltageCollapse));
        assert_eq!(ClassKind::parse("bogus"), None);
    }
}
