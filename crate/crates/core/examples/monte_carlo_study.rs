//! Monte Carlo load-uncertainty study on case145 that stops once the
//! collapse probability is known to ±1 percentage point.
//!
//!     cargo run --release --example monte_carlo_study -- 2.0

use splitpf::case::read_matpower;
use splitpf::montecarlo::{run_study_with_progress, CiTarget, StudyConfig, UncertaintySpec};
use splitpf::solver::{ClassKind, LimitSpec, SolverOptions};
use splitpf::stats::ConfLevel;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let sigma: f64 = std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or(1.0);
    let case = read_matpower(concat!(env!("CARGO_MANIFEST_DIR"), "/data/case145.m"))?;
    let config = StudyConfig {
        max_samples: 2000,
        ci_target: Some(CiTarget { class: ClassKind::VoltageCollapse, level: ConfLevel::CL95, half_width: 0.01 }),
        seed: 7,
        ..Default::default()
    };
    let report = run_study_with_progress(
        &case,
        &UncertaintySpec::normal(sigma),
        &config,
        &SolverOptions::default(),
        &LimitSpec::default(),
        &mut |p| eprint!("\r{} samples", p.done),
    )?;
    eprintln!();
    print!("{}", report.text());
    Ok(())
}
