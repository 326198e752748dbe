//! Warm starts for perturbed samples.
//!
//! With a single slack, every sample's net load change flows through the
//! slack's connection and the whole network turns against it, often by a
//! few tenths of a radian on large grids. Newton with per-variable voltage
//! limiting copes badly with a rigid rotation in rectangular coordinates, so
//! the base solution is first rotated bus by bus by a DC estimate of the
//! angle change.

use std::collections::HashMap;

use num_complex::Complex64;

use crate::case::{BusKind, NetworkCase};
use crate::circuit::SplitCircuitState;
use crate::linalg::solve_linear;

/// Susceptance matrix of the base topology with the slack angle pinned.
#[derive(Debug, Clone)]
pub struct AnglePredictor {
    dim: usize,
    slack: usize,
    pos: HashMap<usize, usize>,
    triplets: Vec<(usize, usize, f64)>,
}

impl AnglePredictor {
    pub fn new(case: &NetworkCase) -> Option<Self> {
        let pos = case.bus_index();
        let slack = case.buses.iter().position(|b| b.kind == BusKind::Slack)?;
        let mut triplets = vec![(slack, slack, 1.0)];
        for br in case.branches.iter().filter(|b| b.in_service) {
            let y = 1.0 / (br.x * br.tap);
            if !y.is_finite() {
                continue;
            }
            let (f, t) = (pos[&br.from], pos[&br.to]);
            for (r, c, v) in [(f, f, y), (t, t, y), (f, t, -y), (t, f, -y)] {
                if r != slack && c != slack {
                    triplets.push((r, c, v));
                }
            }
        }
        Some(AnglePredictor { dim: case.buses.len(), slack, pos, triplets })
    }

    /// `base` rotated by the DC angle change from `base_case`'s loads to
    /// `sample`'s. Loads must correspond one to one, as they do for
    /// [`super::sample_loads`]. Falls back to `base` unchanged if the DC
    /// system cannot be solved.
    pub fn predict(&self, base_case: &NetworkCase, sample: &NetworkCase, base: &SplitCircuitState) -> SplitCircuitState {
        let mut dp = vec![0.0; self.dim];
        for (a, b) in base_case.loads.iter().zip(&sample.loads) {
            dp[self.pos[&a.bus]] -= b.p_nom - a.p_nom;
        }
        dp[self.slack] = 0.0;
        let mut state = base.clone();
        let Ok(dtheta) = solve_linear(self.dim, &self.triplets, &dp) else {
            return state;
        };
        for (k, d) in dtheta.into_iter().enumerate() {
            let v = Complex64::new(base.v_real[k], base.v_imag[k]) * Complex64::from_polar(1.0, d);
            state.v_real[k] = v.re;
            state.v_imag[k] = v.im;
        }
        state
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::case::parse_matpower;

    const THREE_BUS: &str = "function mpc = t
mpc.baseMVA = 100;
mpc.bus = [
	1	3	0	0	0	0	1	1	0	230	1	1.1	0.9;
	2	1	50	10	0	0	1	1	0	230	1	1.1	0.9;
	3	1	30	10	0	0	1	1	0	230	1	1.1	0.9;
];
mpc.gen = [
	1	0	0	300	-300	1	100	1	250	0	0	0	0	0	0	0	0	0	0	0	0;
];
mpc.branch = [
	1	2	0	0.1	0	0	0	0	0	0	1	-360	360;
	2	3	0	0.2	0	0	0	0	0	0	1	-360	360;
];
";

    #[test]
    fn radial_angles_follow_downstream_load() {
        let case = parse_matpower(THREE_BUS).unwrap();
        let mut sample = case.clone();
        sample.loads[1].p_nom += 0.1;
        let base = SplitCircuitState::flat_start(&case);
        let s = AnglePredictor::new(&case).unwrap().predict(&case, &sample, &base);
        let angles = s.angles();
        // 0.1 pu more at bus 3 crosses both lines: -0.1·0.1, then -0.1·0.2 more
        assert_eq!(angles[0], 0.0);
        assert!((angles[1] + 0.01).abs() < 1e-12);
        assert!((angles[2] + 0.03).abs() < 1e-12);
        assert_eq!(s.magnitudes(), base.magnitudes());
    }

    #[test]
    fn unchanged_loads_leave_the_start_alone() {
        let case = parse_matpower(THREE_BUS).unwrap();
        let base = SplitCircuitState::flat_start(&case);
        assert_eq!(AnglePredictor::new(&case).unwrap().predict(&case, &case, &base), base);
    }
}
