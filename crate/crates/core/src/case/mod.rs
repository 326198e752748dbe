//! Network data model: buses, loads, generators and branches in per-unit on
//! the system MVA base, plus validation and outage edits.

mod matpower;

pub use matpower::{parse_matpower, read_matpower, serialize_matpower, ParseError};

use std::collections::{BTreeMap, HashMap, VecDeque};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Default operating band applied when the case file carries no limits.
pub const DEFAULT_V_MIN: f64 = 0.9;
pub const DEFAULT_V_MAX: f64 = 1.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BusKind {
    Slack,
    PV,
    PQ,
}

impl BusKind {
    pub fn matpower_code(self) -> u8 {
        match self {
            BusKind::Slack => 3,
            BusKind::PV => 2,
            BusKind::PQ => 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bus {
    pub id: usize,
    pub kind: BusKind,
    /// Regulated magnitude for Slack/PV buses, recorded magnitude otherwise.
    pub v_set: f64,
    /// Voltage magnitude stored in the case file (used as an initial guess).
    pub vm_init: f64,
    /// Reference angle for the slack bus; initial-guess angle elsewhere.
    pub angle_set: f64,
    pub v_min: f64,
    pub v_max: f64,
    /// Shunt conductance at 1 pu voltage.
    pub gs: f64,
    /// Shunt susceptance at 1 pu voltage.
    pub bs: f64,
    pub area: u32,
    pub zone: u32,
    pub base_kv: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Load {
    pub bus: usize,
    pub p_nom: f64,
    pub q_nom: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Generator {
    pub bus: usize,
    pub p_set: f64,
    /// Reactive output recorded in the case; the fixed injection for a
    /// generator sitting on a PQ bus.
    pub q_set: f64,
    pub v_set: f64,
    pub q_min: f64,
    pub q_max: f64,
    pub p_min: f64,
    pub p_max: f64,
    pub mbase: f64,
    pub in_service: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Branch {
    pub from: usize,
    pub to: usize,
    pub r: f64,
    pub x: f64,
    /// Total line charging susceptance.
    pub b: f64,
    /// MVA rating in per-unit; zero means unlimited.
    pub rate_a: f64,
    pub rate_b: f64,
    pub rate_c: f64,
    /// Off-nominal turns ratio on the from side (1.0 for lines).
    pub tap: f64,
    /// Phase shift in radians.
    pub shift: f64,
    pub in_service: bool,
    pub ang_min: f64,
    pub ang_max: f64,
}

impl Branch {
    pub fn is_transformer(&self) -> bool {
        self.tap != 1.0 || self.shift != 0.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkCase {
    pub name: String,
    pub base_mva: f64,
    pub buses: Vec<Bus>,
    pub loads: Vec<Load>,
    pub generators: Vec<Generator>,
    pub branches: Vec<Branch>,
}

/// Identifies a branch by its terminal buses and its position among the
/// parallel branches joining the same pair (file order, zero based).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct BranchRef {
    pub from: usize,
    pub to: usize,
    pub ordinal: usize,
}

impl fmt::Display for BranchRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-{}", self.from, self.to)?;
        if self.ordinal > 0 {
            write!(f, "#{}", self.ordinal + 1)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("cannot parse {what} from {text:?}")]
pub struct RefParseError {
    pub what: &'static str,
    pub text: String,
}

/// Accepts `F-T` or `F-T#k` (k counts parallel branches from 1).
impl FromStr for BranchRef {
    type Err = RefParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let err = || RefParseError { what: "branch", text: s.to_string() };
        let (pair, ordinal) = match s.trim().split_once('#') {
            Some((p, k)) => (p, k.parse::<usize>().ok().filter(|k| *k >= 1).ok_or_else(err)? - 1),
            None => (s.trim(), 0),
        };
        let (f, t) = pair.split_once('-').ok_or_else(err)?;
        Ok(BranchRef {
            from: f.trim().parse().map_err(|_| err())?,
            to: t.trim().parse().map_err(|_| err())?,
            ordinal,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Outage {
    /// Every in-service generator connected to the bus.
    Generator { bus: usize },
    Branch(BranchRef),
}

impl fmt::Display for Outage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Outage::Generator { bus } => write!(f, "G{bus}"),
            Outage::Branch(b) => write!(f, "B{b}"),
        }
    }
}

/// Accepts the display form: `G<bus>` or `B<from>-<to>[#k]`.
impl FromStr for Outage {
    type Err = RefParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        let err = || RefParseError { what: "outage", text: s.to_string() };
        match s.get(..1) {
            Some("G" | "g") => Ok(Outage::Generator { bus: s[1..].parse().map_err(|_| err())? }),
            Some("B" | "b") => Ok(Outage::Branch(s[1..].parse().map_err(|_| err())?)),
            _ => Err(err()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Violation {
    SlackCount { buses: Vec<usize> },
    VoltageBand { bus: usize },
    NonPositiveSetpoint { bus: usize },
    UnknownBus { element: String, bus: usize },
    DuplicateBus { bus: usize },
    ReactiveLimits { bus: usize, generator: usize },
    GeneratorOnPqBus { bus: usize, generator: usize },
    ZeroImpedance { branch: BranchRef },
    NonPositiveTap { branch: BranchRef },
    Island { buses: Vec<usize> },
    NonFinite { element: String },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::SlackCount { buses } if buses.is_empty() => write!(f, "no slack bus"),
            Violation::SlackCount { buses } => write!(f, "multiple slack buses: {buses:?}"),
            Violation::VoltageBand { bus } => write!(f, "bus {bus}: v_min >= v_max"),
            Violation::NonPositiveSetpoint { bus } => write!(f, "bus {bus}: voltage setpoint <= 0"),
            Violation::UnknownBus { element, bus } => {
                write!(f, "{element} references unknown bus {bus}")
            }
            Violation::DuplicateBus { bus } => write!(f, "bus {bus} defined more than once"),
            Violation::ReactiveLimits { bus, generator } => {
                write!(f, "generator {generator} at bus {bus}: q_min > q_max")
            }
            Violation::GeneratorOnPqBus { bus, generator } => {
                write!(f, "generator {generator} in service on PQ bus {bus}")
            }
            Violation::ZeroImpedance { branch } => write!(f, "branch {branch}: r = x = 0"),
            Violation::NonPositiveTap { branch } => write!(f, "branch {branch}: tap <= 0"),
            Violation::Island { buses } => {
                write!(f, "{} bus(es) not connected to the slack island", buses.len())?;
                let shown: Vec<_> = buses.iter().take(10).collect();
                write!(f, " {shown:?}")
            }
            Violation::NonFinite { element } => write!(f, "{element}: non-finite value"),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OutageError {
    #[error("no in-service element matches outage {0}")]
    UnknownElement(Outage),
    #[error("element of outage {0} is already out of service")]
    AlreadyOut(Outage),
    #[error("outage {outage} splits the network: {} bus(es) lose the slack island", isolated.len())]
    IslandSplit { outage: Outage, isolated: Vec<usize> },
    #[error("outage {0} removes the last in-service generator")]
    NoGeneration(Outage),
}

impl NetworkCase {
    pub fn bus_index(&self) -> HashMap<usize, usize> {
        self.buses.iter().enumerate().map(|(i, b)| (b.id, i)).collect()
    }

    pub fn bus(&self, id: usize) -> Option<&Bus> {
        self.buses.iter().find(|b| b.id == id)
    }

    pub fn slack_buses(&self) -> Vec<usize> {
        self.buses
            .iter()
            .filter(|b| b.kind == BusKind::Slack)
            .map(|b| b.id)
            .collect()
    }

    /// Branch references for every branch, in case order.
    pub fn branch_refs(&self) -> Vec<BranchRef> {
        let mut seen: HashMap<(usize, usize), usize> = HashMap::new();
        self.branches
            .iter()
            .map(|br| {
                let key = (br.from.min(br.to), br.from.max(br.to));
                let ordinal = seen.entry(key).or_insert(0);
                let r = BranchRef { from: br.from, to: br.to, ordinal: *ordinal };
                *ordinal += 1;
                r
            })
            .collect()
    }

    /// Position of the branch matching `r` (either orientation).
    pub fn find_branch(&self, r: &BranchRef) -> Option<usize> {
        self.branch_refs().iter().position(|b| {
            b.ordinal == r.ordinal
                && ((b.from == r.from && b.to == r.to) || (b.from == r.to && b.to == r.from))
        })
    }

    pub fn in_service_branch_count(&self) -> usize {
        self.branches.iter().filter(|b| b.in_service).count()
    }

    /// Buses that cannot reach a slack bus through in-service branches.
    pub fn unreachable_buses(&self) -> Vec<usize> {
        let index = self.bus_index();
        let n = self.buses.len();
        let mut adj: Vec<Vec<usize>> = vec![Vec::new(); n];
        for br in self.branches.iter().filter(|b| b.in_service) {
            if let (Some(&f), Some(&t)) = (index.get(&br.from), index.get(&br.to)) {
                adj[f].push(t);
                adj[t].push(f);
            }
        }
        let mut seen = vec![false; n];
        let mut queue: VecDeque<usize> = self
            .buses
            .iter()
            .enumerate()
            .filter(|(_, b)| b.kind == BusKind::Slack)
            .map(|(i, _)| i)
            .collect();
        for &i in &queue {
            seen[i] = true;
        }
        while let Some(i) = queue.pop_front() {
            for &j in &adj[i] {
                if !seen[j] {
                    seen[j] = true;
                    queue.push_back(j);
                }
            }
        }
        let mut out: Vec<usize> = (0..n).filter(|&i| !seen[i]).map(|i| self.buses[i].id).collect();
        out.sort_unstable();
        out
    }

    /// Checks every structural invariant and returns one entry per violation.
    pub fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        let mut ids: BTreeMap<usize, usize> = BTreeMap::new();
        for b in &self.buses {
            *ids.entry(b.id).or_default() += 1;
        }
        for (&id, &count) in &ids {
            if count > 1 {
                out.push(Violation::DuplicateBus { bus: id });
            }
        }
        let slacks = self.slack_buses();
        if slacks.len() != 1 {
            out.push(Violation::SlackCount { buses: slacks });
        }
        for b in &self.buses {
            if !(b.v_set.is_finite() && b.v_min.is_finite() && b.v_max.is_finite()) {
                out.push(Violation::NonFinite { element: format!("bus {}", b.id) });
                continue;
            }
            if b.v_min >= b.v_max {
                out.push(Violation::VoltageBand { bus: b.id });
            }
            if b.v_set <= 0.0 {
                out.push(Violation::NonPositiveSetpoint { bus: b.id });
            }
        }
        for (i, l) in self.loads.iter().enumerate() {
            if !ids.contains_key(&l.bus) {
                out.push(Violation::UnknownBus { element: format!("load {i}"), bus: l.bus });
            }
            if !(l.p_nom.is_finite() && l.q_nom.is_finite()) {
                out.push(Violation::NonFinite { element: format!("load {i}") });
            }
        }
        let kinds: HashMap<usize, BusKind> = self.buses.iter().map(|b| (b.id, b.kind)).collect();
        for (i, g) in self.generators.iter().enumerate() {
            let Some(&kind) = kinds.get(&g.bus) else {
                out.push(Violation::UnknownBus { element: format!("generator {i}"), bus: g.bus });
                continue;
            };
            if g.q_min > g.q_max {
                out.push(Violation::ReactiveLimits { bus: g.bus, generator: i });
            }
            if g.in_service && kind == BusKind::PQ {
                out.push(Violation::GeneratorOnPqBus { bus: g.bus, generator: i });
            }
        }
        for (br, r) in self.branches.iter().zip(self.branch_refs()) {
            for id in [br.from, br.to] {
                if !ids.contains_key(&id) {
                    out.push(Violation::UnknownBus { element: format!("branch {r}"), bus: id });
                }
            }
            if !br.in_service {
                continue;
            }
            if br.r == 0.0 && br.x == 0.0 {
                out.push(Violation::ZeroImpedance { branch: r });
            }
            if !(br.tap > 0.0) {
                out.push(Violation::NonPositiveTap { branch: r });
            }
        }
        if self.slack_buses().len() == 1 {
            let isolated = self.unreachable_buses();
            if !isolated.is_empty() {
                out.push(Violation::Island { buses: isolated });
            }
        }
        out
    }

    /// Returns a copy of the case with the outage applied.
    ///
    /// A PV bus left without in-service generation becomes PQ. Losing all
    /// generation at the slack bus hands the slack role to the PV bus with
    /// the largest remaining dispatch.
    pub fn apply_outage(&self, outage: &Outage) -> Result<NetworkCase, OutageError> {
        let mut case = self.clone();
        match outage {
            Outage::Generator { bus } => {
                let targets: Vec<usize> = case
                    .generators
                    .iter()
                    .enumerate()
                    .filter(|(_, g)| g.bus == *bus)
                    .map(|(i, _)| i)
                    .collect();
                if targets.is_empty() {
                    return Err(OutageError::UnknownElement(*outage));
                }
                if targets.iter().all(|&i| !case.generators[i].in_service) {
                    return Err(OutageError::AlreadyOut(*outage));
                }
                for i in targets {
                    case.generators[i].in_service = false;
                }
                case.rehome_bus_kinds(outage)?;
            }
            Outage::Branch(r) => {
                let idx = case.find_branch(r).ok_or(OutageError::UnknownElement(*outage))?;
                if !case.branches[idx].in_service {
                    return Err(OutageError::AlreadyOut(*outage));
                }
                case.branches[idx].in_service = false;
                let isolated = case.unreachable_buses();
                if !isolated.is_empty() {
                    return Err(OutageError::IslandSplit { outage: *outage, isolated });
                }
            }
        }
        Ok(case)
    }

    fn rehome_bus_kinds(&mut self, outage: &Outage) -> Result<(), OutageError> {
        let mut dispatch: HashMap<usize, f64> = HashMap::new();
        for g in self.generators.iter().filter(|g| g.in_service) {
            *dispatch.entry(g.bus).or_default() += g.p_set;
        }
        let mut lost_slack = false;
        for b in &mut self.buses {
            if dispatch.contains_key(&b.id) {
                continue;
            }
            match b.kind {
                BusKind::PV => b.kind = BusKind::PQ,
                BusKind::Slack => {
                    b.kind = BusKind::PQ;
                    lost_slack = true;
                }
                BusKind::PQ => {}
            }
        }
        if lost_slack {
            let best = self
                .buses
                .iter()
                .enumerate()
                .filter(|(_, b)| b.kind == BusKind::PV)
                .max_by(|(_, a), (_, b)| {
                    dispatch[&a.id].total_cmp(&dispatch[&b.id]).then(b.id.cmp(&a.id))
                })
                .map(|(i, _)| i)
                .ok_or(OutageError::NoGeneration(*outage))?;
            self.buses[best].kind = BusKind::Slack;
        }
        Ok(())
    }

    pub fn total_load(&self) -> (f64, f64) {
        self.loads
            .iter()
            .fold((0.0, 0.0), |(p, q), l| (p + l.p_nom, q + l.q_nom))
    }

    /// Multiplies every load by `factor`.
    pub fn scale_loads(&self, factor: f64) -> NetworkCase {
        let mut c = self.clone();
        for l in &mut c.loads {
            l.p_nom *= factor;
            l.q_nom *= factor;
        }
        c
    }
}


#[cfg(test)]
mod tests {
    use super::fixtures::*;
    use super::*;

    #[test]
    fn valid_fixture_has_no_violations() {
        assert!(chain3().validate().is_empty());
    }

    #[test]
    fn two_slacks_reported_once_with_both_buses() {
        let mut c = chain3();
        c.buses[1].kind = BusKind::Slack;
        let v = c.validate();
        assert_eq!(v, vec![Violation::SlackCount { buses: vec![1, 2] }]);
    }

    #[test]
    fn zero_impedance_branch_is_a_violation() {
        let mut c = chain3();
        c.branches[0].r = 0.0;
        c.branches[0].x = 0.0;
        let v = c.validate();
        assert_eq!(v.len(), 1);
        assert!(matches!(v[0], Violation::ZeroImpedance { .. }));
        // out of service: fine
        c.branches[0].in_service = false;
        assert!(matches!(c.validate()[0], Violation::Island { .. }));
    }

    #[test]
    fn other_invariants() {
        let mut c = chain3();
        c.buses[2].v_min = 1.2;
        c.generators[1].q_min = 20.0;
        c.loads[0].bus = 99;
        c.branches[1].tap = 0.0;
        let v = c.validate();
        assert!(v.contains(&Violation::VoltageBand { bus: 3 }));
        assert!(v.contains(&Violation::ReactiveLimits { bus: 2, generator: 1 }));
        assert!(v.contains(&Violation::UnknownBus { element: "load 0".into(), bus: 99 }));
        assert!(v.iter().any(|x| matches!(x, Violation::NonPositiveTap { .. })));
    }

    #[test]
    fn generator_outage_demotes_single_generator_pv_bus() {
        let c = chain3();
        let out = c.apply_outage(&Outage::Generator { bus: 2 }).unwrap();
        assert_eq!(out.bus(2).unwrap().kind, BusKind::PQ);
        assert!(!out.generators[1].in_service);
        // input untouched
        assert_eq!(c, chain3());
        assert_eq!(
            out.apply_outage(&Outage::Generator { bus: 2 }),
            Err(OutageError::AlreadyOut(Outage::Generator { bus: 2 }))
        );
    }

    #[test]
    fn slack_generator_outage_promotes_pv_bus() {
        let c = chain3();
        let out = c.apply_outage(&Outage::Generator { bus: 1 }).unwrap();
        assert_eq!(out.bus(1).unwrap().kind, BusKind::PQ);
        assert_eq!(out.bus(2).unwrap().kind, BusKind::Slack);
        let none = out.apply_outage(&Outage::Generator { bus: 2 });
        assert!(matches!(none, Err(OutageError::NoGeneration(_))));
    }

    #[test]
    fn branch_outage_isolating_a_bus_is_an_island_split() {
        let c = chain3();
        let r = BranchRef { from: 2, to: 3, ordinal: 0 };
        match c.apply_outage(&Outage::Branch(r)) {
            Err(OutageError::IslandSplit { isolated, .. }) => assert_eq!(isolated, vec![3]),
            other => panic!("unexpected {other:?}"),
        }
        let mut meshed = chain3();
        meshed.branches.push(line(1, 3, 0.01, 0.1));
        let out = meshed.apply_outage(&Outage::Branch(r)).unwrap();
        assert_eq!(out.in_service_branch_count(), 2);
        // reversed orientation resolves to the same element
        let rev = BranchRef { from: 3, to: 1, ordinal: 0 };
        assert!(meshed.apply_outage(&Outage::Branch(rev)).is_ok());
        let missing = BranchRef { from: 1, to: 3, ordinal: 1 };
        assert_eq!(
            meshed.apply_outage(&Outage::Branch(missing)),
            Err(OutageError::UnknownElement(Outage::Branch(missing)))
        );
    }

    #[test]
    fn parallel_branch_refs_are_numbered() {
        let mut c = chain3();
        c.branches.push(line(2, 1, 0.01, 0.1));
        let refs = c.branch_refs();
        assert_eq!(refs[2], BranchRef { from: 2, to: 1, ordinal: 1 });
        assert_eq!(refs[2].to_string(), "2-1#2");
    }

    #[test]
    fn outage_labels_round_trip() {
        for o in [
            Outage::Generator { bus: 132 },
            Outage::Branch(BranchRef { from: 130, to: 131, ordinal: 0 }),
            Outage::Branch(BranchRef { from: 12854, to: 6522, ordinal: 2 }),
        ] {
            assert_eq!(o.to_string().parse::<Outage>().unwrap(), o);
        }
        assert_eq!("B1-2".parse::<Outage>().unwrap().to_string(), "B1-2");
        for bad in ["", "X1", "G", "B1", "B1-2#0", "B1-x"] {
            assert!(bad.parse::<Outage>().is_err(), "{bad}");
        }
    }
}
