//! Converged voltages and dispatch against tables produced by an
//! independent power-flow implementation (see tests/data/gen_reference.py).

mod common;

use common::{load_case, reference_generation, reference_voltages, voltage_errors};
use splitpf::contingency::rank_generators;
use splitpf::solver::{robust_solve, PFSolution, SolverOptions};

const TOL: f64 = 1e-4;

fn solve_unlimited(name: &str) -> (splitpf::case::NetworkCase, PFSolution) {
    let case = load_case(name);
    let opts = SolverOptions { enforce_q_limits: false, ..Default::default() };
    let sol = robust_solve(&case, None, &opts);
    assert!(sol.converged, "{name}: {:?}", sol.failure);
    (case, sol)
}

fn check_voltages(name: &str) {
    let (case, sol) = solve_unlimited(name);
    let (dvm, dva) = voltage_errors(&case, &sol, &reference_voltages(name));
    assert!(dvm < TOL && dva < TOL, "{name}: |V| off by {dvm:e}, angle off by {dva:e}");
}

#[test]
fn case14_voltages() {
    check_voltages("case14");
}

#[test]
fn case30_voltages() {
    check_voltages("case30");
}

#[test]
fn case118_voltages() {
    check_voltages("case118");
}

#[test]
fn case145_voltages() {
    check_voltages("case145");
}

#[test]
fn dispatch_matches_reference() {
    for name in ["case14", "case30", "case118"] {
        let (case, sol) = solve_unlimited(name);
        let ours: std::collections::HashMap<usize, f64> = sol.generation(&case).into_iter().map(|(b, s)| (b, s.re)).collect();
        for (bus, p) in reference_generation(name) {
            // buses whose units are all out of service are absent on our side
            let got = ours.get(&bus).copied().unwrap_or(0.0);
            assert!((got - p).abs() < TOL, "{name} bus {bus}: {got} vs {p}");
        }
    }
}

#[test]
fn case14_generator_ranking_follows_reference_dispatch() {
    let (case, sol) = solve_unlimited("case14");
    let mut expected = reference_generation("case14");
    expected.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    let ranking = rank_generators(&case, &sol);
    let got: Vec<usize> = ranking.iter().map(|g| g.bus).collect();
    let want: Vec<usize> = expected.iter().map(|g| g.0).collect();
    assert_eq!(got, want);
    for (g, (_, p)) in ranking.iter().zip(&expected) {
        assert!((g.p - p).abs() < TOL);
    }
}
