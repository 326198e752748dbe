//! Push case118 towards its loadability limit and compare plain Newton
//! with Tx-stepping (both continuation elements) from a flat start.
//!
//!     cargo run --release --example tx_stepping -- 1.80

use std::time::Instant;

use splitpf::case::read_matpower;
use splitpf::circuit::SplitCircuitState;
use splitpf::solver::{newton_solve, tx_stepping_solve, PFSolution, SolverOptions, TxElement};

fn report(label: &str, sol: &PFSolution, t: Instant) {
    let detail = match &sol.failure {
        Some(f) => format!("failed: {f}"),
        None => format!("converged, min |V| {:.4} pu", sol.state.magnitudes().into_iter().fold(f64::INFINITY, f64::min)),
    };
    println!("{label:<28} {:>4} iterations  {:>7.1} ms  {detail}", sol.iterations, t.elapsed().as_secs_f64() * 1e3);
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let scale: f64 = std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or(1.80);
    let case = read_matpower(concat!(env!("CARGO_MANIFEST_DIR"), "/data/case118.m"))?.scale_loads(scale);
    let opts = SolverOptions { enforce_q_limits: false, tx_fallback: false, ..Default::default() };
    println!("case118 with loads ×{scale}");

    let t = Instant::now();
    report("Newton from flat start", &newton_solve(&case, &SplitCircuitState::flat_start(&case), &opts), t);
    for element in [TxElement::BusToSlack, TxElement::BranchParallel] {
        let t = Instant::now();
        let sol = tx_stepping_solve(&case, &SolverOptions { tx_element: element, ..opts.clone() });
        report(&format!("Tx-stepping ({element:?})"), &sol, t);
    }
    Ok(())
}
