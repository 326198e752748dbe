mod common;

use proptest::prelude::*;
use splitpf::case::{parse_matpower, serialize_matpower, NetworkCase};
use splitpf::circuit::{Circuit, SplitCircuitState, TxElement};
use splitpf::solver::{newton_solve, SolverOptions};
use splitpf::stats::{ci_binary, ConfLevel};

/// Largest absolute gap between the assembled Jacobian and central
/// differences of the residual.
fn jacobian_gap(circuit: &Circuit, state: &SplitCircuitState) -> f64 {
    let j = circuit.assemble(state).unwrap().to_dense();
    let x0 = circuit.pack(state);
    let h = 1e-6;
    let mut worst = 0.0f64;
    for c in 0..x0.len() {
        let eval = |dx: f64| {
            let mut x = x0.clone();
            x[c] += dx;
            let mut s = state.clone();
            circuit.unpack(&x, &mut s);
            circuit.residual(&s).unwrap()
        };
        let (fp, fm) = (eval(h), eval(-h));
        for r in 0..x0.len() {
            worst = worst.max((j[r][c] - (fp[r] - fm[r]) / (2.0 * h)).abs());
        }
    }
    worst
}

fn perturbed_state(case: &NetworkCase, mags: &[f64], angles: &[f64], q: &[f64], i_slack: [f64; 2]) -> SplitCircuitState {
    let mut s = SplitCircuitState::flat_start(case);
    for k in 0..case.buses.len() {
        let (sin, cos) = angles[k % angles.len()].sin_cos();
        let m = mags[k % mags.len()];
        s.v_real[k] = m * cos;
        s.v_imag[k] = m * sin;
    }
    for (k, v) in s.q_gen.iter_mut().enumerate() {
        *v = q[k % q.len()];
    }
    s.i_slack = i_slack;
    s
}

fn state_parts() -> impl Strategy<Value = (Vec<f64>, Vec<f64>, Vec<f64>, [f64; 2])> {
    (
        prop::collection::vec(0.85f64..1.15, 1..16),
        prop::collection::vec(-0.6f64..0.6, 1..16),
        prop::collection::vec(-1.0f64..1.0, 1..8),
        [-2.0f64..2.0, -2.0f64..2.0],
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn five_bus_jacobian_matches_differences(
        (mags, angles, q, i_slack) in state_parts(),
        level in prop_oneof![Just(0.0), 0.01f64..10.0],
        blend in 0.0f64..1.0,
        bus_to_slack in any::<bool>(),
        clamp in prop::option::of(-0.5f64..0.5),
    ) {
        let case = common::five_bus();
        let mut circuit = Circuit::new(&case).unwrap();
        circuit.tx_level = level;
        circuit.tx_blend = if level > 0.0 { blend } else { 0.0 };
        circuit.tx_element = if bus_to_slack { TxElement::BusToSlack } else { TxElement::BranchParallel };
        circuit.set_clamps(vec![clamp]);
        let state = perturbed_state(&case, &mags, &angles, &q, i_slack);
        let gap = jacobian_gap(&circuit, &state);
        prop_assert!(gap < 1e-6, "gap {gap:e}");
    }

    #[test]
    fn case14_jacobian_matches_differences((mags, angles, q, i_slack) in state_parts()) {
        let case = common::load_case("case14");
        let circuit = Circuit::new(&case).unwrap();
        let state = perturbed_state(&case, &mags, &angles, &q, i_slack);
        let gap = jacobian_gap(&circuit, &state);
        prop_assert!(gap < 1e-6, "gap {gap:e}");
    }

    #[test]
    fn serialized_cases_parse_back_identically(
        loads in prop::collection::vec((-50.0f64..150.0, -30.0f64..60.0), 3),
        r in 0.001f64..0.2,
        x in 0.01f64..0.5,
        tap in prop_oneof![Just(1.0), 0.9f64..1.1],
        shift_deg in -30.0f64..30.0,
        branch_on in any::<bool>(),
    ) {
        let mut case = common::five_bus();
        for (l, (p, q)) in case.loads.iter_mut().zip(&loads) {
            l.p_nom = p / 100.0;
            l.q_nom = q / 100.0;
        }
        case.branches[6].r = r;
        case.branches[6].x = x;
        case.branches[3].tap = tap;
        case.branches[3].shift = shift_deg.to_radians();
        case.branches[5].in_service = branch_on;
        let first = parse_matpower(&serialize_matpower(&case)).unwrap();
        let text = serialize_matpower(&first);
        let second = parse_matpower(&text).unwrap();
        prop_assert_eq!(&second, &first);
        prop_assert_eq!(serialize_matpower(&second), text);
    }

    #[test]
    fn limiting_keeps_the_newton_fixed_point(scale in 0.3f64..1.6) {
        let case = common::five_bus().scale_loads(scale);
        let start = SplitCircuitState::flat_start(&case);
        let limited = newton_solve(&case, &start, &SolverOptions { v_limit_delta: 0.02, ..Default::default() });
        let free = newton_solve(&case, &start, &SolverOptions { v_limit_delta: 1e6, ..Default::default() });
        prop_assert!(limited.converged && free.converged);
        for k in 0..case.buses.len() {
            prop_assert!((limited.state.voltage(k) - free.state.voltage(k)).norm() < 1e-8);
        }
    }

    #[test]
    fn intervals_bracket_the_estimate(successes in 0u64..500, extra in 1u64..5000) {
        let n = successes + extra;
        for level in [ConfLevel::CL95, ConfLevel::CL99] {
            let ci = ci_binary(successes, n, level).unwrap();
            let p = successes as f64 / n as f64;
            prop_assert!(ci.lower <= p && p <= ci.upper);
            prop_assert!(0.0 <= ci.lower && ci.upper <= 1.0);
        }
        let (a, b) = (ci_binary(successes, n, ConfLevel::CL95).unwrap(), ci_binary(successes, n, ConfLevel::CL99).unwrap());
        prop_assert!(b.half_width >= a.half_width);
    }
}

#[test]
fn shipped_cases_survive_a_round_trip() {
    for name in ["case14", "case30", "case118", "case145"] {
        let case = common::load_case(name);
        let back = parse_matpower(&serialize_matpower(&case)).unwrap();
        assert_eq!(back, case, "{name}");
    }
}
