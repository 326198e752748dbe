//! Operating-state classification of a solved (or failed) sample.

use std::f64::consts::FRAC_PI_2;
use std::fmt;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::PFSolution;
use crate::case::{BranchRef, NetworkCase};
use crate::circuit::Circuit;

/// Magnitude and flow comparisons allow this much numerical slack so a PV
/// bus regulated exactly at its band edge is not flagged.
const LIMIT_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LimitSpec {
    /// Largest allowed |angle difference| across an in-service branch (rad).
    pub angle_max: f64,
    pub enforce_v_band: bool,
    pub enforce_branch_rating: bool,
}

impl Default for LimitSpec {
    fn default() -> Self {
        LimitSpec { angle_max: FRAC_PI_2, enforce_v_band: true, enforce_branch_rating: true }
    }
}

impl LimitSpec {
    pub fn check(&self) -> Result<(), String> {
        if self.angle_max > 0.0 && self.angle_max <= std::f64::consts::PI {
            Ok(())
        } else {
            Err(format!("angle_max must lie in (0, π], got {}", self.angle_max))
        }
    }
}

/// Every limit violated by a converged solution.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Violations {
    pub angular: Vec<BranchRef>,
    /// Bus ids outside their voltage band.
    pub voltage_band: Vec<usize>,
    pub overload: Vec<BranchRef>,
}

impl Violations {
    pub fn is_empty(&self) -> bool {
        self.angular.is_empty() && self.voltage_band.is_empty() && self.overload.is_empty()
    }
}

/// Headline class of a sample. Violating classes carry the full set of
/// violations; the variant is chosen by priority angular > band > overload.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum OperatingClass {
    Normal,
    VoltageCollapse,
    AngularUnstable(Violations),
    VoltageBandViolation(Violations),
    BranchOverload(Violations),
}

impl OperatingClass {
    pub fn kind(&self) -> ClassKind {
        match self {
            OperatingClass::Normal => ClassKind::Normal,
            OperatingClass::VoltageCollapse => ClassKind::VoltageCollapse,
            OperatingClass::AngularUnstable(_) => ClassKind::AngularUnstable,
            OperatingClass::VoltageBandViolation(_) => ClassKind::VoltageBand,
            OperatingClass::BranchOverload(_) => ClassKind::BranchOverload,
        }
    }

    pub fn violations(&self) -> Option<&Violations> {
        match self {
            OperatingClass::AngularUnstable(v)
            | OperatingClass::VoltageBandViolation(v)
            | OperatingClass::BranchOverload(v) => Some(v),
            _ => None,
        }
    }
}

/// Payload-free class tag, used for tallies and report keys.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassKind {
    Normal,
    VoltageCollapse,
    AngularUnstable,
    VoltageBand,
    BranchOverload,
}

impl ClassKind {
    pub const ALL: [ClassKind; 5] = [
        ClassKind::Normal,
        ClassKind::VoltageCollapse,
        ClassKind::AngularUnstable,
        ClassKind::VoltageBand,
        ClassKind::BranchOverload,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ClassKind::Normal => "normal",
            ClassKind::VoltageCollapse => "voltage_collapse",
            ClassKind::AngularUnstable => "angular_unstable",
            ClassKind::VoltageBand => "voltage_band",
            ClassKind::BranchOverload => "branch_overload",
        }
    }

    pub fn parse(s: &str) -> Option<ClassKind> {
        let s = s.trim().to_ascii_lowercase().replace('-', "_");
        ClassKind::ALL.into_iter().find(|k| k.name() == s).or(match s.as_str() {
            "collapse" => Some(ClassKind::VoltageCollapse),
            "angular" => Some(ClassKind::AngularUnstable),
            "band" => Some(ClassKind::VoltageBand),
            "overload" => Some(ClassKind::BranchOverload),
            _ => None,
        })
    }
}

impl fmt::Display for ClassKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Per-branch flow at a solution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BranchFlow {
    pub branch: BranchRef,
    pub s_from: Complex64,
    pub s_to: Complex64,
    /// `arg(V_from · conj(V_to))`, wrapped to (-π, π].
    pub angle_diff: f64,
}

impl BranchFlow {
    pub fn max_apparent(&self) -> f64 {
        self.s_from.norm().max(self.s_to.norm())
    }

    pub fn losses(&self) -> Complex64 {
        self.s_from + self.s_to
    }
}

/// Terminal power flows and angle differences of every in-service branch.
pub fn branch_flows(case: &NetworkCase, solution: &PFSolution) -> Vec<BranchFlow> {
    let Ok(circuit) = Circuit::new(case) else {
        return Vec::new();
    };
    let pos = case.bus_index();
    let state = &solution.state;
    case.branches
        .iter()
        .zip(circuit.branch_refs())
        .zip(circuit.branch_currents(state))
        .filter(|((br, _), _)| br.in_service)
        .map(|((br, r), (i_f, i_t))| {
            let vf = state.voltage(pos[&br.from]);
            let vt = state.voltage(pos[&br.to]);
            BranchFlow {
                branch: *r,
                s_from: vf * i_f.conj(),
                s_to: vt * i_t.conj(),
                angle_diff: (vf * vt.conj()).arg(),
            }
        })
        .collect()
}

/// Classifies a solution; non-converged results are voltage collapse.
pub fn classify(case: &NetworkCase, solution: &PFSolution, limits: &LimitSpec) -> OperatingClass {
    if !solution.converged || !solution.state.is_finite() {
        return OperatingClass::VoltageCollapse;
    }
    let flows = branch_flows(case, solution);
    let mut v = Violations::default();
    for fl in &flows {
        if fl.angle_diff.abs() >= limits.angle_max {
            v.angular.push(fl.branch);
        }
    }
    if limits.enforce_v_band {
        for (bus, vm) in case.buses.iter().zip(solution.state.magnitudes()) {
            if vm < bus.v_min - LIMIT_TOL || vm > bus.v_max + LIMIT_TOL {
                v.voltage_band.push(bus.id);
            }
        }
    }
    if limits.enforce_branch_rating {
        let rate: Vec<f64> = case.branches.iter().filter(|b| b.in_service).map(|b| b.rate_a).collect();
        for (fl, rate_a) in flows.iter().zip(rate) {
            if rate_a > 0.0 && fl.max_apparent() > rate_a + LIMIT_TOL {
                v.overload.push(fl.branch);
            }
        }
    }
    if !v.angular.is_empty() {
        OperatingClass::AngularUnstable(v)
    } else if !v.voltage_band.is_empty() {
        OperatingClass::VoltageBandViolation(v)
    } else if !v.overload.is_empty() {
        OperatingClass::BranchOverload(v)
    } else {
        OperatingClass::Normal
    }
}
