//! Solve a MATPOWER case from a flat start and print the bus voltages.
//!
//!     cargo run --release --example solve_case -- crates/core/data/case14.m

use std::time::Instant;

use splitpf::case::read_matpower;
use splitpf::circuit::SplitCircuitState;
use splitpf::solver::{classify, newton_solve, LimitSpec, SolverOptions};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let path = std::env::args().nth(1).unwrap_or_else(|| concat!(env!("CARGO_MANIFEST_DIR"), "/data/case14.m").into());
    let case = read_matpower(&path)?;
    let opts = SolverOptions { enforce_q_limits: false, ..Default::default() };

    let t = Instant::now();
    let sol = newton_solve(&case, &SplitCircuitState::flat_start(&case), &opts);
    let elapsed = t.elapsed();
    println!(
        "{}: {} buses, converged={} in {} iterations, residual {:.2e}, {:.1} ms",
        case.name,
        case.buses.len(),
        sol.converged,
        sol.iterations,
        sol.residual_norm,
        elapsed.as_secs_f64() * 1e3
    );
    if let Some(f) = &sol.failure {
        println!("failure: {f}");
        return Ok(());
    }
    if case.buses.len() <= 200 {
        println!("{:>6} {:>9} {:>9}", "bus", "|V| pu", "deg");
        for (b, (vm, va)) in case.buses.iter().zip(sol.state.magnitudes().into_iter().zip(sol.state.angles())) {
            println!("{:>6} {:>9.5} {:>9.4}", b.id, vm, va.to_degrees());
        }
    }
    println!("class: {:?}", classify(&case, &sol, &LimitSpec::default()).kind());
    Ok(())
}
