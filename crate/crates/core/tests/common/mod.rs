#![allow(dead_code)]

use std::path::PathBuf;

use splitpf::case::{parse_matpower, read_matpower, NetworkCase};
use splitpf::solver::PFSolution;

pub fn data_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("data")
}

pub fn case_path(name: &str) -> PathBuf {
    data_dir().join(format!("{name}.m"))
}

pub fn load_case(name: &str) -> NetworkCase {
    read_matpower(case_path(name)).unwrap_or_else(|e| panic!("{name}: {e}"))
}

fn reference_rows(file: &str) -> Vec<Vec<f64>> {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/data").join(file);
    let text = std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    text.lines()
        .skip(1)
        .filter(|l| !l.trim().is_empty())
        .map(|l| l.split(',').map(|x| x.trim().parse().expect("numeric reference")).collect())
        .collect()
}

/// `(bus, |V|, angle in rad)` from an independent solver, no reactive limits.
pub fn reference_voltages(case: &str) -> Vec<(usize, f64, f64)> {
    reference_rows(&format!("{case}_reference.csv")).into_iter().map(|r| (r[0] as usize, r[1], r[2])).collect()
}

/// `(bus, P in pu)` of the in-service generation per bus from the same solve.
pub fn reference_generation(case: &str) -> Vec<(usize, f64)> {
    reference_rows(&format!("{case}_gen_reference.csv")).into_iter().map(|r| (r[0] as usize, r[1])).collect()
}

/// Largest magnitude and angle deviations from a reference table.
pub fn voltage_errors(case: &NetworkCase, sol: &PFSolution, reference: &[(usize, f64, f64)]) -> (f64, f64) {
    let pos = case.bus_index();
    let (vm, va) = (sol.state.magnitudes(), sol.state.angles());
    assert_eq!(reference.len(), case.buses.len());
    reference.iter().fold((0.0f64, 0.0f64), |(dm, da), &(bus, m, a)| {
        let k = pos[&bus];
        (dm.max((vm[k] - m).abs()), da.max((va[k] - a).abs()))
    })
}

/// Five buses: slack 1, PV 2, loads on 3–5; one off-nominal phase-shifting
/// transformer, line charging and a shunt capacitor.
pub const FIVE_BUS: &str = "function mpc = five_bus
mpc.version = '2';
mpc.baseMVA = 100;
mpc.bus = [
	1	3	0	0	0	0	1	1.04	0	230	1	1.1	0.9;
	2	2	20	10	0	0	1	1.02	0	230	1	1.1	0.9;
	3	1	45	15	0	0	1	1	0	230	1	1.1	0.9;
	4	1	40	5	0	0	1	1	0	230	1	1.1	0.9;
	5	1	60	10	0	19	1	1	0	230	1	1.1	0.9;
];
mpc.gen = [
	1	0	0	200	-200	1.04	100	1	300	0	0	0	0	0	0	0	0	0	0	0	0;
	2	40	0	60	-40	1.02	100	1	100	0	0	0	0	0	0	0	0	0	0	0	0;
];
mpc.branch = [
	1	2	0.02	0.06	0.06	0	0	0	0	0	1	-360	360;
	1	3	0.08	0.24	0.05	0	0	0	0	0	1	-360	360;
	2	3	0.06	0.18	0.04	0	0	0	0	0	1	-360	360;
	2	4	0.06	0.18	0.04	0	0	0	0.98	-3	1	-360	360;
	2	5	0.04	0.12	0.03	0	0	0	0	0	1	-360	360;
	3	4	0.01	0.03	0.02	0	0	0	0	0	1	-360	360;
	4	5	0.08	0.24	0.05	0	0	0	0	0	1	-360	360;
];
";

/// Slack feeding one load bus through a single line.
pub const TWO_BUS: &str = "function mpc = two_bus
mpc.version = '2';
mpc.baseMVA = 100;
mpc.bus = [
	1	3	0	0	0	0	1	1	0	230	1	1.1	0.9;
	2	1	50	20	0	0	1	1	0	230	1	1.1	0.9;
];
mpc.gen = [
	1	0	0	300	-300	1	100	1	250	0	0	0	0	0	0	0	0	0	0	0	0;
];
mpc.branch = [
	1	2	0.01	0.1	0	0	0	0	0	0	1	-360	360;
];
";

pub fn five_bus() -> NetworkCase {
    parse_matpower(FIVE_BUS).expect("fixture parses")
}

pub fn two_bus() -> NetworkCase {
    parse_matpower(TWO_BUS).expect("fixture parses")
}

/// Fresh scratch directory under the target dir, emptied first.
pub fn scratch_dir(name: &str) -> PathBuf {
    let dir = PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join(name);
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).expect("create scratch dir");
    dir
}
