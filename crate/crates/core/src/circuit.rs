//! Split real/imaginary equivalent circuit of the power-flow problem.
//!
//! Every bus contributes two KCL rows (real and imaginary current
//! mismatch), every regulating PV bus one voltage-magnitude row, and the
//! slack bus two voltage-constraint rows. Unknowns are ordered the same
//! way: `(V_R, V_I)` pairs per bus, then the reactive output `Q` of each
//! regulating PV bus, then the real and imaginary slack currents.
//!
//! The residual `F(x)` is the current drawn out of each bus (network,
//! shunts, loads) minus the current injected into it (generators, slack).
//! Stamps write the Jacobian `∂F/∂x` and the right-hand side `-F(x)`, so a
//! Newton update solves `J Δx = -F`.

use std::collections::HashMap;
use std::io::{self, Write};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::case::{Branch, BranchRef, Bus, BusKind, Load, NetworkCase};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CircuitError {
    #[error("zero voltage at bus {bus}: PQ element current is undefined")]
    SingularPoint { bus: usize },
    #[error("branch {0} has zero impedance")]
    ZeroImpedance(BranchRef),
    #[error("element references unknown bus {0}")]
    UnknownBus(usize),
    #[error("case must have exactly one slack bus, found {0}")]
    SlackCount(usize),
    #[error("state dimension does not match the circuit: {0}")]
    Dimension(String),
}

/// Newton-Raphson state of the split circuit.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitCircuitState {
    pub v_real: Vec<f64>,
    pub v_imag: Vec<f64>,
    /// Reactive output per PV bus, in case order of the PV buses. Entries
    /// for buses held at a reactive limit carry that limit.
    pub q_gen: Vec<f64>,
    /// Current injected by the slack source, real and imaginary.
    pub i_slack: [f64; 2],
    pub iteration: usize,
}

impl SplitCircuitState {
    /// Flat start: 1∠0 at PQ buses, the setpoint magnitude at PV buses,
    /// the reference phasor at the slack, reactive output at mid-range.
    pub fn flat_start(case: &NetworkCase) -> Self {
        let pv = pv_units(case);
        let mut v_real = Vec::with_capacity(case.buses.len());
        let mut v_imag = Vec::with_capacity(case.buses.len());
        for b in &case.buses {
            let (re, im) = match b.kind {
                BusKind::Slack => (b.v_set * b.angle_set.cos(), b.v_set * b.angle_set.sin()),
                BusKind::PV => (b.v_set, 0.0),
                BusKind::PQ => (1.0, 0.0),
            };
            v_real.push(re);
            v_imag.push(im);
        }
        let q_gen = pv.iter().map(|u| u.mid_q()).collect();
        SplitCircuitState { v_real, v_imag, q_gen, i_slack: [0.0; 2], iteration: 0 }
    }

    /// Initial guess from the voltages recorded in the case file.
    pub fn from_case_voltages(case: &NetworkCase) -> Self {
        let mut s = Self::flat_start(case);
        for (i, b) in case.buses.iter().enumerate() {
            let vm = if b.kind == BusKind::PQ { b.vm_init } else { b.v_set };
            s.v_real[i] = vm * b.angle_set.cos();
            s.v_imag[i] = vm * b.angle_set.sin();
        }
        s
    }

    pub fn voltage(&self, bus_pos: usize) -> Complex64 {
        Complex64::new(self.v_real[bus_pos], self.v_imag[bus_pos])
    }

    pub fn magnitudes(&self) -> Vec<f64> {
        self.v_real.iter().zip(&self.v_imag).map(|(r, i)| r.hypot(*i)).collect()
    }

    pub fn angles(&self) -> Vec<f64> {
        self.v_real.iter().zip(&self.v_imag).map(|(r, i)| i.atan2(*r)).collect()
    }

    pub fn is_finite(&self) -> bool {
        self.v_real.iter().chain(&self.v_imag).chain(&self.q_gen).chain(&self.i_slack).all(|v| v.is_finite())
    }
}

/// Aggregated generation at one PV bus.
#[derive(Debug, Clone, PartialEq)]
pub struct PvUnit {
    pub bus: usize,
    pub p: f64,
    pub v_set: f64,
    pub q_min: f64,
    pub q_max: f64,
}

impl PvUnit {
    fn mid_q(&self) -> f64 {
        if self.q_min.is_finite() && self.q_max.is_finite() {
            0.5 * (self.q_min + self.q_max)
        } else {
            0.0
        }
    }
}

/// PV buses of the case in bus order, generators on each bus summed.
pub fn pv_units(case: &NetworkCase) -> Vec<PvUnit> {
    let mut agg: HashMap<usize, (f64, f64, f64)> = HashMap::new();
    for g in case.generators.iter().filter(|g| g.in_service) {
        let e = agg.entry(g.bus).or_default();
        e.0 += g.p_set;
        e.1 += g.q_min;
        e.2 += g.q_max;
    }
    case.buses
        .iter()
        .filter(|b| b.kind == BusKind::PV)
        .map(|b| {
            let (p, q_min, q_max) = agg.get(&b.id).copied().unwrap_or_default();
            PvUnit { bus: b.id, p, v_set: b.v_set, q_min, q_max }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Part {
    Real,
    Imag,
}

/// Maps buses and auxiliary unknowns to matrix rows/columns.
#[derive(Debug, Clone)]
pub struct IndexMap {
    bus_pos: HashMap<usize, usize>,
    n_bus: usize,
    q_col: Vec<Option<usize>>,
    slack_row: usize,
    dim: usize,
}

impl IndexMap {
    fn new(case: &NetworkCase, clamped: &[bool]) -> Self {
        let n_bus = case.buses.len();
        let mut next = 2 * n_bus;
        let q_col = clamped
            .iter()
            .map(|&c| {
                if c {
                    None
                } else {
                    next += 1;
                    Some(next - 1)
                }
            })
            .collect();
        IndexMap { bus_pos: case.bus_index(), n_bus, q_col, slack_row: next, dim: next + 2 }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_bus(&self) -> usize {
        self.n_bus
    }

    pub fn bus_pos(&self, id: usize) -> Option<usize> {
        self.bus_pos.get(&id).copied()
    }

    /// Row/column of a bus voltage component (by bus position).
    pub fn voltage(&self, pos: usize, part: Part) -> usize {
        match part {
            Part::Real => 2 * pos,
            Part::Imag => 2 * pos + 1,
        }
    }

    /// Column of a PV unit's reactive output, if it is an unknown.
    pub fn q(&self, unit: usize) -> Option<usize> {
        self.q_col[unit]
    }

    pub fn slack(&self, part: Part) -> usize {
        match part {
            Part::Real => self.slack_row,
            Part::Imag => self.slack_row + 1,
        }
    }

    pub fn is_voltage(&self, row: usize) -> bool {
        row < 2 * self.n_bus
    }
}

/// Triplet matrix plus dense right-hand side for one Newton iteration.
#[derive(Debug, Clone)]
pub struct StampAccumulator {
    pub triplets: Vec<(usize, usize, f64)>,
    pub rhs: Vec<f64>,
    pub index: IndexMap,
}

impl StampAccumulator {
    pub fn new(index: IndexMap) -> Self {
        let dim = index.dim();
        StampAccumulator { triplets: Vec::new(), rhs: vec![0.0; dim], index }
    }

    pub fn dim(&self) -> usize {
        self.index.dim()
    }

    #[inline]
    pub fn add(&mut self, row: usize, col: usize, value: f64) {
        self.triplets.push((row, col, value));
    }

    #[inline]
    pub fn add_rhs(&mut self, row: usize, value: f64) {
        self.rhs[row] += value;
    }

    fn pos(&self, bus: usize) -> Result<usize, CircuitError> {
        self.index.bus_pos(bus).ok_or(CircuitError::UnknownBus(bus))
    }

    /// Dense copy of the matrix (small systems and tests only).
    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let n = self.dim();
        let mut m = vec![vec![0.0; n]; n];
        for &(r, c, v) in &self.triplets {
            m[r][c] += v;
        }
        m
    }

    /// Writes the matrix in Matrix Market coordinate format, followed by the
    /// right-hand side as a dense array block.
    pub fn write_matrix_market(&self, mut w: impl Write) -> io::Result<()> {
        let n = self.dim();
        writeln!(w, "%%MatrixMarket matrix coordinate real general")?;
        writeln!(w, "{n} {n} {}", self.triplets.len())?;
        for &(r, c, v) in &self.triplets {
            writeln!(w, "{} {} {:e}", r + 1, c + 1, v)?;
        }
        writeln!(w, "%%MatrixMarket matrix array real general")?;
        writeln!(w, "{n} 1")?;
        for v in &self.rhs {
            writeln!(w, "{v:e}")?;
        }
        Ok(())
    }
}

/// Current drawn by a constant-power element, `conj(S / V)` split into
/// real and imaginary parts.
pub fn load_current(v_real: f64, v_imag: f64, p: f64, q: f64) -> Result<(f64, f64), CircuitError> {
    let d = v_real * v_real + v_imag * v_imag;
    if d == 0.0 {
        return Err(CircuitError::SingularPoint { bus: 0 });
    }
    Ok(((p * v_real + q * v_imag) / d, (p * v_imag - q * v_real) / d))
}

/// Partial derivatives `[[∂I_R/∂V_R, ∂I_R/∂V_I], [∂I_I/∂V_R, ∂I_I/∂V_I]]`
/// of [`load_current`].
pub fn load_current_jacobian(v_real: f64, v_imag: f64, p: f64, q: f64) -> [[f64; 2]; 2] {
    let (vr2, vi2, vri) = (v_real * v_real, v_imag * v_imag, v_real * v_imag);
    let d2 = (vr2 + vi2) * (vr2 + vi2);
    let a = (p * (vi2 - vr2) - 2.0 * q * vri) / d2;
    let b = (q * (vr2 - vi2) - 2.0 * p * vri) / d2;
    [[a, b], [b, -a]]
}

fn with_bus(e: CircuitError, bus: usize) -> CircuitError {
    match e {
        CircuitError::SingularPoint { .. } => CircuitError::SingularPoint { bus },
        other => other,
    }
}

/// Stamps a constant-power element drawing `(p, q)` at `bus` (negative
/// values inject). Writes the four conductance/controlled-source entries
/// and the history source `-I^k`.
fn stamp_constant_power(
    acc: &mut StampAccumulator,
    bus: usize,
    p: f64,
    q: f64,
    state: &SplitCircuitState,
) -> Result<usize, CircuitError> {
    let pos = acc.pos(bus)?;
    let (vr, vi) = (state.v_real[pos], state.v_imag[pos]);
    let (ir, ii) = load_current(vr, vi, p, q).map_err(|e| with_bus(e, bus))?;
    let j = load_current_jacobian(vr, vi, p, q);
    let (r, i) = (acc.index.voltage(pos, Part::Real), acc.index.voltage(pos, Part::Imag));
    acc.add(r, r, j[0][0]);
    acc.add(r, i, j[0][1]);
    acc.add(i, r, j[1][0]);
    acc.add(i, i, j[1][1]);
    acc.add_rhs(r, -ir);
    acc.add_rhs(i, -ii);
    Ok(pos)
}

/// PQ load: linearized currents of the constant-power load model.
pub fn stamp_pq_load(acc: &mut StampAccumulator, load: &Load, state: &SplitCircuitState) -> Result<(), CircuitError> {
    stamp_constant_power(acc, load.bus, load.p_nom, load.q_nom, state).map(|_| ())
}

/// Regulating PV generator with reactive output as an unknown.
///
/// Injects `conj((P + jQ) / V)`, i.e. contributes the negated load-model
/// current to the KCL rows, adds the `∂/∂Q` column, and writes the
/// linearized magnitude row `2 V_R ΔV_R + 2 V_I ΔV_I = V_m² - |V|²`.
pub fn stamp_pv_generator(
    acc: &mut StampAccumulator,
    unit_index: usize,
    unit: &PvUnit,
    state: &SplitCircuitState,
) -> Result<(), CircuitError> {
    let q = state.q_gen[unit_index];
    let pos = stamp_constant_power(acc, unit.bus, -unit.p, -q, state)?;
    let Some(qc) = acc.index.q(unit_index) else {
        return Ok(());
    };
    let (vr, vi) = (state.v_real[pos], state.v_imag[pos]);
    let d = vr * vr + vi * vi;
    let (r, i) = (acc.index.voltage(pos, Part::Real), acc.index.voltage(pos, Part::Imag));
    acc.add(r, qc, -vi / d);
    acc.add(i, qc, vr / d);
    acc.add(qc, r, 2.0 * vr);
    acc.add(qc, i, 2.0 * vi);
    acc.add_rhs(qc, unit.v_set * unit.v_set - d);
    Ok(())
}

/// Complex two-port admittance of a pi-model branch with the tap on the
/// from side: `[[y_ff, y_ft], [y_tf, y_tt]]`.
pub fn branch_admittance(br: &Branch) -> Option<[[Complex64; 2]; 2]> {
    if br.r == 0.0 && br.x == 0.0 {
        return None;
    }
    let ys = Complex64::new(1.0, 0.0) / Complex64::new(br.r, br.x);
    let ych = Complex64::new(0.0, br.b / 2.0);
    let tap = Complex64::from_polar(br.tap, br.shift);
    let ytt = ys + ych;
    let yff = ytt / (br.tap * br.tap);
    let yft = -ys / tap.conj();
    let ytf = -ys / tap;
    Some([[yff, yft], [ytf, ytt]])
}

fn stamp_admittance(acc: &mut StampAccumulator, row: usize, col: usize, y: Complex64, state: &SplitCircuitState) {
    let (rr, ri) = (acc.index.voltage(row, Part::Real), acc.index.voltage(row, Part::Imag));
    let (cr, ci) = (acc.index.voltage(col, Part::Real), acc.index.voltage(col, Part::Imag));
    acc.add(rr, cr, y.re);
    acc.add(rr, ci, -y.im);
    acc.add(ri, cr, y.im);
    acc.add(ri, ci, y.re);
    let i = y * state.voltage(col);
    acc.add_rhs(rr, -i.re);
    acc.add_rhs(ri, -i.im);
}

/// Linear branch stamp: the real decomposition of the branch's 2×2
/// complex admittance block. Out-of-service branches add nothing.
pub fn stamp_branch(
    acc: &mut StampAccumulator,
    branch: &Branch,
    branch_ref: BranchRef,
    state: &SplitCircuitState,
) -> Result<(), CircuitError> {
    if !branch.in_service {
        return Ok(());
    }
    let y = branch_admittance(branch).ok_or(CircuitError::ZeroImpedance(branch_ref))?;
    let f = acc.pos(branch.from)?;
    let t = acc.pos(branch.to)?;
    let nodes = [f, t];
    for (a, &ra) in nodes.iter().enumerate() {
        for (b, &cb) in nodes.iter().enumerate() {
            stamp_admittance(acc, ra, cb, y[a][b], state);
        }
    }
    Ok(())
}

/// Where the continuation admittances are placed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TxElement {
    /// `g · y_series` in parallel with every in-service branch.
    BranchParallel,
    /// From every non-slack bus straight to the slack reference phasor,
    /// sized `g` times the sum of the bus's branch series admittances.
    /// While the network is shorted the slack is not a bottleneck: on a
    /// grid fed through one weak slack branch, the vanishing losses would
    /// otherwise have to flow back through that branch.
    #[default]
    BusToSlack,
}

/// Continuation element in parallel with an in-service branch: `g` times
/// the branch's series admittance. Scaling every branch by the same factor
/// shorts the network uniformly regardless of system size, and keeps each
/// branch's X/R character (a pure conductance cannot hold a PV bus above
/// the slack magnitude).
pub fn tx_admittance(branch: &Branch, g: f64) -> Complex64 {
    if !branch.in_service || g == 0.0 {
        return Complex64::default();
    }
    let ys = Complex64::new(1.0, 0.0) / Complex64::new(branch.r, branch.x);
    ys * g
}

/// Stamps [`tx_admittance`] between the branch terminals.
pub fn stamp_parallel_admittance(
    acc: &mut StampAccumulator,
    branch: &Branch,
    g: f64,
    state: &SplitCircuitState,
) -> Result<(), CircuitError> {
    let y = tx_admittance(branch, g);
    if y == Complex64::default() {
        return Ok(());
    }
    let f = acc.pos(branch.from)?;
    let t = acc.pos(branch.to)?;
    stamp_admittance(acc, f, f, y, state);
    stamp_admittance(acc, f, t, -y, state);
    stamp_admittance(acc, t, f, -y, state);
    stamp_admittance(acc, t, t, y, state);
    Ok(())
}

/// Bus shunt as a constant admittance to ground.
pub fn stamp_shunt(acc: &mut StampAccumulator, bus: &Bus, state: &SplitCircuitState) -> Result<(), CircuitError> {
    if bus.gs == 0.0 && bus.bs == 0.0 {
        return Ok(());
    }
    let pos = acc.pos(bus.id)?;
    stamp_admittance(acc, pos, pos, Complex64::new(bus.gs, bus.bs), state);
    Ok(())
}

/// Ideal voltage source at the slack bus: auxiliary current unknowns enter
/// the bus KCL rows and two rows pin `V_R`, `V_I` to the reference phasor.
pub fn stamp_slack(acc: &mut StampAccumulator, bus: &Bus, state: &SplitCircuitState) -> Result<(), CircuitError> {
    let pos = acc.pos(bus.id)?;
    let (r, i) = (acc.index.voltage(pos, Part::Real), acc.index.voltage(pos, Part::Imag));
    let (sr, si) = (acc.index.slack(Part::Real), acc.index.slack(Part::Imag));
    acc.add(r, sr, -1.0);
    acc.add(i, si, -1.0);
    acc.add_rhs(r, state.i_slack[0]);
    acc.add_rhs(i, state.i_slack[1]);
    acc.add(sr, r, 1.0);
    acc.add(si, i, 1.0);
    acc.add_rhs(sr, bus.v_set * bus.angle_set.cos() - state.v_real[pos]);
    acc.add_rhs(si, bus.v_set * bus.angle_set.sin() - state.v_imag[pos]);
    Ok(())
}

/// A case compiled for repeated assembly: PV aggregation, reactive clamps
/// and the continuation level.
#[derive(Debug, Clone)]
pub struct Circuit<'a> {
    pub case: &'a NetworkCase,
    pub pv: Vec<PvUnit>,
    /// Fixed reactive output for PV units held at a limit.
    pub clamps: Vec<Option<f64>>,
    /// Continuation multiplier on every in-service branch's series
    /// admittance (see [`tx_admittance`]).
    pub tx_level: f64,
    /// Weight in [0, 1] pulling PV setpoints toward the slack magnitude
    /// during continuation; zero for the original problem.
    pub tx_blend: f64,
    pub tx_element: TxElement,
    slack_pos: usize,
    /// Sum of incident in-service series admittances per bus position.
    ties: Vec<Complex64>,
    refs: Vec<BranchRef>,
    /// Generators on PQ buses act as fixed injections.
    fixed_injections: Vec<(usize, f64, f64)>,
    index: IndexMap,
}

impl<'a> Circuit<'a> {
    pub fn new(case: &'a NetworkCase) -> Result<Self, CircuitError> {
        let slacks: Vec<usize> = case
            .buses
            .iter()
            .enumerate()
            .filter(|(_, b)| b.kind == BusKind::Slack)
            .map(|(i, _)| i)
            .collect();
        if slacks.len() != 1 {
            return Err(CircuitError::SlackCount(slacks.len()));
        }
        let refs = case.branch_refs();
        for (br, r) in case.branches.iter().zip(&refs) {
            if br.in_service && br.r == 0.0 && br.x == 0.0 {
                return Err(CircuitError::ZeroImpedance(*r));
            }
        }
        let kinds: HashMap<usize, BusKind> = case.buses.iter().map(|b| (b.id, b.kind)).collect();
        let mut fixed_injections = Vec::new();
        for g in case.generators.iter().filter(|g| g.in_service) {
            match kinds.get(&g.bus) {
                Some(BusKind::PQ) => fixed_injections.push((g.bus, g.p_set, g.q_set)),
                Some(_) => {}
                None => return Err(CircuitError::UnknownBus(g.bus)),
            }
        }
        let pv = pv_units(case);
        let clamps = vec![None; pv.len()];
        let index = IndexMap::new(case, &vec![false; pv.len()]);
        let mut ties = vec![Complex64::default(); case.buses.len()];
        for br in case.branches.iter().filter(|b| b.in_service) {
            let y = tx_admittance(br, 1.0);
            ties[index.bus_pos[&br.from]] += y;
            ties[index.bus_pos[&br.to]] += y;
        }
        Ok(Circuit {
            case,
            pv,
            clamps,
            tx_level: 0.0,
            tx_blend: 0.0,
            tx_element: TxElement::default(),
            slack_pos: slacks[0],
            ties,
            refs,
            fixed_injections,
            index,
        })
    }

    pub fn set_clamps(&mut self, clamps: Vec<Option<f64>>) {
        assert_eq!(clamps.len(), self.pv.len());
        let mask: Vec<bool> = clamps.iter().map(Option::is_some).collect();
        self.index = IndexMap::new(self.case, &mask);
        self.clamps = clamps;
    }

    pub fn index(&self) -> &IndexMap {
        &self.index
    }

    pub fn dim(&self) -> usize {
        self.index.dim()
    }

    pub fn slack_pos(&self) -> usize {
        self.slack_pos
    }

    pub fn branch_refs(&self) -> &[BranchRef] {
        &self.refs
    }

    fn check(&self, state: &SplitCircuitState) -> Result<(), CircuitError> {
        let n = self.case.buses.len();
        if state.v_real.len() != n || state.v_imag.len() != n || state.q_gen.len() != self.pv.len() {
            return Err(CircuitError::Dimension(format!(
                "state has {}/{} voltages and {} PV outputs, circuit has {n} buses and {} PV buses",
                state.v_real.len(),
                state.v_imag.len(),
                state.q_gen.len(),
                self.pv.len()
            )));
        }
        Ok(())
    }

    fn slack_reference(&self) -> Complex64 {
        let b = &self.case.buses[self.slack_pos];
        Complex64::from_polar(b.v_set, b.angle_set)
    }

    /// Voltage setpoint of PV unit `k`, including continuation relaxation.
    pub fn pv_setpoint(&self, k: usize) -> f64 {
        let v = self.pv[k].v_set;
        if self.tx_blend == 0.0 {
            return v;
        }
        v + self.tx_blend * (self.case.buses[self.slack_pos].v_set - v)
    }

    /// Writes clamp values into the state's reactive outputs.
    pub fn apply_clamps(&self, state: &mut SplitCircuitState) {
        for (q, c) in state.q_gen.iter_mut().zip(&self.clamps) {
            if let Some(v) = c {
                *q = *v;
            }
        }
    }

    /// Stamps every element at the given iterate.
    pub fn assemble(&self, state: &SplitCircuitState) -> Result<StampAccumulator, CircuitError> {
        self.check(state)?;
        let mut acc = StampAccumulator::new(self.index.clone());
        acc.triplets.reserve(16 * self.case.branches.len() + 8 * self.case.buses.len());
        for (br, r) in self.case.branches.iter().zip(&self.refs) {
            stamp_branch(&mut acc, br, *r, state)?;
            if self.tx_level > 0.0 && self.tx_element == TxElement::BranchParallel {
                stamp_parallel_admittance(&mut acc, br, self.tx_level, state)?;
            }
        }
        if self.tx_level > 0.0 && self.tx_element == TxElement::BusToSlack {
            let v_ref = self.slack_reference();
            for k in (0..self.ties.len()).filter(|&k| k != self.slack_pos) {
                let y = self.ties[k] * self.tx_level;
                stamp_admittance(&mut acc, k, k, y, state);
                let i = y * v_ref;
                acc.add_rhs(self.index.voltage(k, Part::Real), i.re);
                acc.add_rhs(self.index.voltage(k, Part::Imag), i.im);
            }
        }
        for bus in &self.case.buses {
            stamp_shunt(&mut acc, bus, state)?;
        }
        for load in &self.case.loads {
            stamp_pq_load(&mut acc, load, state)?;
        }
        for &(bus, p, q) in &self.fixed_injections {
            stamp_constant_power(&mut acc, bus, -p, -q, state)?;
        }
        for (k, unit) in self.pv.iter().enumerate() {
            if let Some(qc) = self.clamps[k] {
                stamp_constant_power(&mut acc, unit.bus, -unit.p, -qc, state)?;
            } else if self.tx_blend == 0.0 {
                stamp_pv_generator(&mut acc, k, unit, state)?;
            } else {
                let relaxed = PvUnit { v_set: self.pv_setpoint(k), ..unit.clone() };
                stamp_pv_generator(&mut acc, k, &relaxed, state)?;
            }
        }
        stamp_slack(&mut acc, &self.case.buses[self.slack_pos], state)?;
        Ok(acc)
    }

    /// Branch terminal currents `(I_from, I_to)` flowing into the branch,
    /// including any continuation admittance. Out-of-service branches
    /// carry zero.
    pub fn branch_currents(&self, state: &SplitCircuitState) -> Vec<(Complex64, Complex64)> {
        let pos = &self.index.bus_pos;
        self.case
            .branches
            .iter()
            .map(|br| {
                if !br.in_service {
                    return (Complex64::default(), Complex64::default());
                }
                let y = branch_admittance(br).expect("validated at construction");
                let vf = state.voltage(pos[&br.from]);
                let vt = state.voltage(pos[&br.to]);
                let g = match self.tx_element {
                    TxElement::BranchParallel => tx_admittance(br, self.tx_level),
                    TxElement::BusToSlack => Complex64::default(),
                };
                let i_f = y[0][0] * vf + y[0][1] * vt + g * (vf - vt);
                let i_t = y[1][0] * vf + y[1][1] * vt + g * (vt - vf);
                (i_f, i_t)
            })
            .collect()
    }

    /// Current mismatch per row; zero exactly at a power-flow solution.
    pub fn residual(&self, state: &SplitCircuitState) -> Result<Vec<f64>, CircuitError> {
        self.check(state)?;
        let pos = &self.index.bus_pos;
        let n = self.case.buses.len();
        let mut drawn = vec![Complex64::default(); n];
        for (br, (i_f, i_t)) in self.case.branches.iter().zip(self.branch_currents(state)) {
            if br.in_service {
                drawn[pos[&br.from]] += i_f;
                drawn[pos[&br.to]] += i_t;
            }
        }
        for (k, bus) in self.case.buses.iter().enumerate() {
            drawn[k] += Complex64::new(bus.gs, bus.bs) * state.voltage(k);
        }
        if self.tx_level > 0.0 && self.tx_element == TxElement::BusToSlack {
            let v_ref = self.slack_reference();
            for (k, d) in drawn.iter_mut().enumerate().filter(|(k, _)| *k != self.slack_pos) {
                *d += self.ties[k] * self.tx_level * (state.voltage(k) - v_ref);
            }
        }
        let mut add_power = |bus: usize, p: f64, q: f64| -> Result<(), CircuitError> {
            let k = pos[&bus];
            let v = state.voltage(k);
            if v.norm_sqr() == 0.0 {
                return Err(CircuitError::SingularPoint { bus });
            }
            // conj(S / V)
            drawn[k] += (Complex64::new(p, q) / v).conj();
            Ok(())
        };
        for l in &self.case.loads {
            add_power(l.bus, l.p_nom, l.q_nom)?;
        }
        for &(bus, p, q) in &self.fixed_injections {
            add_power(bus, -p, -q)?;
        }
        for (k, unit) in self.pv.iter().enumerate() {
            let q = self.clamps[k].unwrap_or(state.q_gen[k]);
            add_power(unit.bus, -unit.p, -q)?;
        }
        drawn[self.slack_pos] -= Complex64::new(state.i_slack[0], state.i_slack[1]);

        let mut f = vec![0.0; self.dim()];
        for (k, d) in drawn.iter().enumerate() {
            f[2 * k] = d.re;
            f[2 * k + 1] = d.im;
        }
        for (k, unit) in self.pv.iter().enumerate() {
            if let Some(row) = self.index.q(k) {
                let v = state.voltage(pos[&unit.bus]);
                let vs = self.pv_setpoint(k);
                f[row] = v.norm_sqr() - vs * vs;
            }
        }
        let slack = &self.case.buses[self.slack_pos];
        let vs = state.voltage(self.slack_pos);
        f[self.index.slack(Part::Real)] = vs.re - slack.v_set * slack.angle_set.cos();
        f[self.index.slack(Part::Imag)] = vs.im - slack.v_set * slack.angle_set.sin();
        Ok(f)
    }

    /// Flattens the state into the unknown vector.
    pub fn pack(&self, state: &SplitCircuitState) -> Vec<f64> {
        let mut x = vec![0.0; self.dim()];
        for k in 0..self.case.buses.len() {
            x[2 * k] = state.v_real[k];
            x[2 * k + 1] = state.v_imag[k];
        }
        for (k, q) in state.q_gen.iter().enumerate() {
            if let Some(c) = self.index.q(k) {
                x[c] = *q;
            }
        }
        x[self.index.slack(Part::Real)] = state.i_slack[0];
        x[self.index.slack(Part::Imag)] = state.i_slack[1];
        x
    }

    /// Inverse of [`Circuit::pack`]; clamped outputs take their clamp value.
    pub fn unpack(&self, x: &[f64], state: &mut SplitCircuitState) {
        for k in 0..self.case.buses.len() {
            state.v_real[k] = x[2 * k];
            state.v_imag[k] = x[2 * k + 1];
        }
        for k in 0..state.q_gen.len() {
            if let Some(c) = self.index.q(k) {
                state.q_gen[k] = x[c];
            }
        }
        self.apply_clamps(state);
        state.i_slack = [x[self.index.slack(Part::Real)], x[self.index.slack(Part::Imag)]];
    }
}

/// Residual of `state` on an unmodified case.
pub fn residual(case: &NetworkCase, state: &SplitCircuitState) -> Result<Vec<f64>, CircuitError> {
    Circuit::new(case)?.residual(state)
}

pub fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0_f64, |m, x| if x.is_nan() { f64::NAN } else { m.max(x.abs()) })
}
