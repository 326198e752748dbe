//! N-1 screen of case14: the three largest generators, the three most
//! loaded branches and one double line outage, each studied under 5%
//! normal load noise. The case's tight voltage band is not enforced here.
//!
//!     cargo run --release --example contingency_screen

use splitpf::case::read_matpower;
use splitpf::contingency::{run_contingency_study, ContingencySpec};
use splitpf::montecarlo::{StudyConfig, UncertaintySpec};
use splitpf::solver::{LimitSpec, SolverOptions};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let case = read_matpower(concat!(env!("CARGO_MANIFEST_DIR"), "/data/case14.m"))?;
    let spec = ContingencySpec { n1_generators: 3, n1_branches: 3, explicit: vec!["B1-2 B1-5".parse()?], ..Default::default() };
    let config = StudyConfig { max_samples: 500, seed: 3, ..Default::default() };
    let study = run_contingency_study(
        &case,
        &spec,
        &UncertaintySpec::normal(5.0),
        &config,
        &SolverOptions::default(),
        &LimitSpec { enforce_v_band: false, ..Default::default() },
    )?;
    print!("{}", study.text());
    Ok(())
}
