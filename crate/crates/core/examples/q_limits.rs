//! Solve case14 with line 1-2 out and loads at 95%, with and without
//! generator reactive limits, and list the PV buses switched to fixed
//! reactive output.
//!
//!     cargo run --release --example q_limits

use std::collections::HashMap;

use splitpf::case::read_matpower;
use splitpf::solver::{robust_solve, PFSolution, SolverOptions};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut case = read_matpower(concat!(env!("CARGO_MANIFEST_DIR"), "/data/case14.m"))?.scale_loads(0.95);
    case.branches[0].in_service = false;
    let free = robust_solve(&case, None, &SolverOptions { enforce_q_limits: false, ..Default::default() });
    let limited = robust_solve(&case, None, &SolverOptions::default());
    if !(free.converged && limited.converged) {
        return Err("case did not solve".into());
    }

    println!("case14, line 1-2 out, loads ×0.95: {} PV bus(es) hit a limit", limited.q_limit_switches.len());
    for s in &limited.q_limit_switches {
        println!("  bus {:>3} held at Q{:?}", s.bus, s.limit);
    }
    let q = |sol: &PFSolution| sol.generation(&case).into_iter().map(|(b, s)| (b, s.im)).collect::<HashMap<_, _>>();
    let (qf, ql) = (q(&free), q(&limited));
    let (vf, vl) = (free.state.magnitudes(), limited.state.magnitudes());
    println!("{:>5} {:>10} {:>10} {:>10} {:>10}", "bus", "Q free", "Q limited", "|V| free", "|V| lim");
    for (k, bus) in case.buses.iter().enumerate() {
        let fmt = |m: &HashMap<usize, f64>| m.get(&bus.id).map_or("-".into(), |q| format!("{q:.4}"));
        println!("{:>5} {:>10} {:>10} {:>10.4} {:>10.4}", bus.id, fmt(&qf), fmt(&ql), vf[k], vl[k]);
    }
    Ok(())
}
