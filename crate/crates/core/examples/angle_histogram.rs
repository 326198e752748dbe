//! Distribution of the angle across one case30 branch under 5% load noise,
//! split by operating class. Writes the histogram as CSV to stdout.
//!
//!     cargo run --release --example angle_histogram -- 6-8 > hist.csv

use splitpf::case::read_matpower;
use splitpf::montecarlo::{run_study, StudyConfig, UncertaintySpec};
use splitpf::solver::{LimitSpec, SolverOptions};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let branch = std::env::args().nth(1).unwrap_or_else(|| "1-2".into());
    let case = read_matpower(concat!(env!("CARGO_MANIFEST_DIR"), "/data/case30.m"))?;
    let config = StudyConfig { max_samples: 3000, seed: 5, probes: vec![format!("angle:{branch}").parse()?], ..Default::default() };
    let report = run_study(&case, &UncertaintySpec::normal(5.0), &config, &SolverOptions::default(), &LimitSpec::default())?;
    let hist = &report.histograms[0];
    eprintln!("{}: {} samples in {} bins ({})", hist.probe, hist.histogram.n, hist.histogram.bin_count(), hist.unit);
    hist.histogram.write_csv(std::io::stdout().lock())?;
    Ok(())
}
