//! Newton-Raphson on the split circuit, with per-variable voltage limiting,
//! Tx-stepping continuation as a fallback, and PV–PQ switching for
//! generator reactive limits.

mod classify;

pub use classify::{branch_flows, classify, ClassKind, LimitSpec, OperatingClass, Violations};

use std::fmt;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::case::{BusKind, NetworkCase};
pub use crate::circuit::TxElement;
use crate::circuit::{inf_norm, Circuit, CircuitError, SplitCircuitState};
use crate::linalg::{LinalgError, SparseLuSolver};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TxSchedule {
    Geometric,
    Linear,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverOptions {
    /// Residual infinity-norm threshold (pu).
    pub tol: f64,
    pub max_iter: usize,
    /// Largest per-iteration change allowed for any voltage variable (pu).
    pub v_limit_delta: f64,
    /// Number of nonzero continuation levels before the final zero step.
    pub tx_steps: usize,
    /// First continuation level, as a multiple of each branch's series
    /// admittance.
    pub tx_g_init: f64,
    /// Last nonzero level of the geometric schedule.
    pub tx_g_final: f64,
    pub tx_schedule: TxSchedule,
    pub tx_element: TxElement,
    /// Intermediate levels that may be inserted into one failing step.
    pub tx_refinements: usize,
    /// Fall back to Tx-stepping when plain Newton fails.
    pub tx_fallback: bool,
    pub enforce_q_limits: bool,
    /// PV–PQ switching rounds before the sample is declared non-convergent.
    pub q_limit_rounds: usize,
    pub trace: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            tol: 1e-8,
            max_iter: 50,
            v_limit_delta: 0.1,
            tx_steps: 20,
            tx_g_init: 1e3,
            tx_g_final: 1e-3,
            tx_schedule: TxSchedule::Geometric,
            tx_element: TxElement::default(),
            tx_refinements: 4,
            tx_fallback: true,
            enforce_q_limits: true,
            q_limit_rounds: 10,
            trace: false,
        }
    }
}

impl SolverOptions {
    pub fn check(&self) -> Result<(), String> {
        if !(self.tol > 0.0) {
            return Err("tol must be > 0".into());
        }
        if self.max_iter < 1 {
            return Err("max_iter must be >= 1".into());
        }
        if !(self.v_limit_delta > 0.0) {
            return Err("v_limit_delta must be > 0".into());
        }
        if !(self.tx_g_init > 0.0) || !(self.tx_g_final > 0.0) || self.tx_g_final > self.tx_g_init {
            return Err("need 0 < tx_g_final <= tx_g_init".into());
        }
        if self.tx_steps < 1 {
            return Err("tx_steps must be >= 1".into());
        }
        Ok(())
    }

    /// Continuation levels, strictly decreasing and ending at zero.
    pub fn tx_levels(&self) -> Vec<f64> {
        let n = self.tx_steps;
        let mut levels: Vec<f64> = match self.tx_schedule {
            TxSchedule::Geometric if n == 1 => vec![self.tx_g_init],
            TxSchedule::Geometric => {
                let ratio = (self.tx_g_final / self.tx_g_init).powf(1.0 / (n - 1) as f64);
                (0..n).map(|k| self.tx_g_init * ratio.powi(k as i32)).collect()
            }
            TxSchedule::Linear => (0..n).map(|k| self.tx_g_init * (1.0 - k as f64 / n as f64)).collect(),
        };
        levels.push(0.0);
        levels
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum QLimit {
    Min,
    Max,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct QLimitSwitch {
    pub bus: usize,
    pub limit: QLimit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum SolveFailure {
    MaxIterations { residual: f64 },
    Diverged { iteration: usize },
    Singular { iteration: usize, pivot: Option<usize> },
    Circuit(String),
    TxStep { step: usize, level: f64, residual: f64 },
    QLimitCycle { rounds: usize },
    QLimitResolve { round: usize },
}

impl fmt::Display for SolveFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SolveFailure::MaxIterations { residual } => {
                write!(f, "iteration limit reached, residual {residual:.3e}")
            }
            SolveFailure::Diverged { iteration } => write!(f, "diverged at iteration {iteration}"),
            SolveFailure::Singular { iteration, pivot } => {
                write!(f, "singular Jacobian at iteration {iteration} (pivot {pivot:?})")
            }
            SolveFailure::Circuit(m) => write!(f, "{m}"),
            SolveFailure::TxStep { step, level, residual } => write!(
                f,
                "Tx-stepping failed at step {step} (continuation level {level:.3e}, residual {residual:.3e})"
            ),
            SolveFailure::QLimitCycle { rounds } => {
                write!(f, "reactive-limit switching did not settle in {rounds} rounds")
            }
            SolveFailure::QLimitResolve { round } => {
                write!(f, "re-solve after reactive-limit switching failed in round {round}")
            }
        }
    }
}

/// One Newton iteration, for the optional trace log.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub iteration: usize,
    pub residual_norm: f64,
    pub limited: usize,
    pub tx_level: f64,
}

impl fmt::Display for TraceRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "iter {:>3}  residual {:.6e}  limited {:>5}  tx_level {:.3e}",
            self.iteration, self.residual_norm, self.limited, self.tx_level
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PFSolution {
    pub state: SplitCircuitState,
    pub converged: bool,
    /// Newton iterations spent, summed over all continuation steps and
    /// reactive-limit rounds.
    pub iterations: usize,
    pub used_tx_stepping: bool,
    pub q_limit_switches: Vec<QLimitSwitch>,
    /// Reactive output held fixed per PV bus (case order), if clamped.
    pub clamps: Vec<Option<f64>>,
    pub residual_norm: f64,
    pub failure: Option<SolveFailure>,
    pub trace: Vec<TraceRecord>,
}

impl PFSolution {
    /// Circuit matching this solution's clamp set.
    pub fn circuit<'a>(&self, case: &'a NetworkCase) -> Result<Circuit<'a>, CircuitError> {
        let mut c = Circuit::new(case)?;
        if self.clamps.len() == c.pv.len() {
            c.set_clamps(self.clamps.clone());
        }
        Ok(c)
    }

    /// Complex power delivered by the generation at each regulated bus
    /// (slack first is not guaranteed; case bus order).
    pub fn generation(&self, case: &NetworkCase) -> Vec<(usize, Complex64)> {
        let circuit = match Circuit::new(case) {
            Ok(c) => c,
            Err(_) => return Vec::new(),
        };
        let mut out = Vec::new();
        let mut pv = circuit.pv.iter().zip(&self.state.q_gen);
        for (k, b) in case.buses.iter().enumerate() {
            match b.kind {
                BusKind::Slack => {
                    let i = Complex64::new(self.state.i_slack[0], self.state.i_slack[1]);
                    out.push((b.id, self.state.voltage(k) * i.conj()));
                }
                BusKind::PV => {
                    let (unit, q) = pv.next().expect("one unit per PV bus");
                    out.push((b.id, Complex64::new(unit.p, *q)));
                }
                BusKind::PQ => {}
            }
        }
        out
    }
}

struct NewtonOutcome {
    state: SplitCircuitState,
    converged: bool,
    iterations: usize,
    residual_norm: f64,
    failure: Option<SolveFailure>,
}

/// Magnitude beyond which an iterate is treated as divergent.
const DIVERGENCE_V: f64 = 1e3;

fn newton_iterate(
    circuit: &Circuit<'_>,
    mut state: SplitCircuitState,
    opts: &SolverOptions,
    lu: &mut SparseLuSolver,
    trace: &mut Vec<TraceRecord>,
) -> NewtonOutcome {
    circuit.apply_clamps(&mut state);
    let fail = |state, iterations, residual_norm, failure| NewtonOutcome {
        state,
        converged: false,
        iterations,
        residual_norm,
        failure: Some(failure),
    };
    let mut k = 0;
    let mut limited = 0;
    loop {
        let f = match circuit.residual(&state) {
            Ok(f) => f,
            Err(e) => return fail(state, k, f64::NAN, SolveFailure::Circuit(e.to_string())),
        };
        let norm = inf_norm(&f);
        if opts.trace {
            trace.push(TraceRecord { iteration: k, residual_norm: norm, limited, tx_level: circuit.tx_level });
        }
        if !norm.is_finite() {
            return fail(state, k, norm, SolveFailure::Diverged { iteration: k });
        }
        if norm <= opts.tol {
            state.iteration = k;
            return NewtonOutcome { state, converged: true, iterations: k, residual_norm: norm, failure: None };
        }
        if k >= opts.max_iter {
            return fail(state, k, norm, SolveFailure::MaxIterations { residual: norm });
        }
        let acc = match circuit.assemble(&state) {
            Ok(a) => a,
            Err(e) => return fail(state, k, norm, SolveFailure::Circuit(e.to_string())),
        };
        let dx = match lu.solve(acc.dim(), &acc.triplets, &acc.rhs) {
            Ok(dx) => dx,
            Err(LinalgError::Singular { pivot }) => {
                return fail(state, k, norm, SolveFailure::Singular { iteration: k + 1, pivot })
            }
            Err(e) => return fail(state, k, norm, SolveFailure::Circuit(e.to_string())),
        };
        let mut x = circuit.pack(&state);
        let index = circuit.index();
        limited = 0;
        for (row, (xi, d)) in x.iter_mut().zip(dx).enumerate() {
            let step = if index.is_voltage(row) && d.abs() > opts.v_limit_delta {
                limited += 1;
                opts.v_limit_delta.copysign(d)
            } else {
                d
            };
            *xi += step;
        }
        circuit.unpack(&x, &mut state);
        k += 1;
        if !state.is_finite() || state.v_real.iter().chain(&state.v_imag).any(|v| v.abs() > DIVERGENCE_V) {
            return fail(state, k, f64::NAN, SolveFailure::Diverged { iteration: k });
        }
    }
}

fn failed_setup(state: SplitCircuitState, e: CircuitError) -> PFSolution {
    PFSolution {
        clamps: vec![None; state.q_gen.len()],
        state,
        converged: false,
        iterations: 0,
        used_tx_stepping: false,
        q_limit_switches: Vec::new(),
        residual_norm: f64::NAN,
        failure: Some(SolveFailure::Circuit(e.to_string())),
        trace: Vec::new(),
    }
}

/// Newton-Raphson from `init` with per-variable voltage limiting.
pub fn newton_solve(case: &NetworkCase, init: &SplitCircuitState, opts: &SolverOptions) -> PFSolution {
    newton_with_clamps(case, init, None, opts)
}

fn newton_with_clamps(
    case: &NetworkCase,
    init: &SplitCircuitState,
    clamps: Option<&[Option<f64>]>,
    opts: &SolverOptions,
) -> PFSolution {
    let mut circuit = match Circuit::new(case) {
        Ok(c) => c,
        Err(e) => return failed_setup(init.clone(), e),
    };
    if let Some(c) = clamps {
        circuit.set_clamps(c.to_vec());
    }
    let mut trace = Vec::new();
    let out = newton_iterate(&circuit, init.clone(), opts, &mut SparseLuSolver::new(), &mut trace);
    PFSolution {
        state: out.state,
        converged: out.converged,
        iterations: out.iterations,
        used_tx_stepping: false,
        q_limit_switches: Vec::new(),
        clamps: circuit.clamps.clone(),
        residual_norm: out.residual_norm,
        failure: out.failure,
        trace,
    }
}

/// Start for continuation: every bus at the slack phasor.
pub fn slack_start(case: &NetworkCase) -> SplitCircuitState {
    let mut s = SplitCircuitState::flat_start(case);
    if let Some(b) = case.buses.iter().find(|b| b.kind == BusKind::Slack) {
        let (re, im) = (b.v_set * b.angle_set.cos(), b.v_set * b.angle_set.sin());
        s.v_real.iter_mut().for_each(|v| *v = re);
        s.v_imag.iter_mut().for_each(|v| *v = im);
    }
    s
}

/// Tx-stepping: solve with a large admittance across every branch and PV
/// setpoints pulled to the slack magnitude, then relax both step by step to
/// the original problem, warm-starting each step. A step that fails is
/// retried through up to `tx_refinements` intermediate levels.
pub fn tx_stepping_solve(case: &NetworkCase, opts: &SolverOptions) -> PFSolution {
    tx_stepping_with_clamps(case, None, opts)
}

fn tx_stepping_with_clamps(case: &NetworkCase, clamps: Option<&[Option<f64>]>, opts: &SolverOptions) -> PFSolution {
    let start = slack_start(case);
    let mut circuit = match Circuit::new(case) {
        Ok(c) => c,
        Err(e) => return failed_setup(start, e),
    };
    if let Some(c) = clamps {
        circuit.set_clamps(c.to_vec());
    }
    circuit.tx_element = opts.tx_element;
    let mut lu = SparseLuSolver::new();
    let mut trace = Vec::new();
    let mut state = start;
    let mut iterations = 0;
    let mut last_norm = f64::NAN;
    let mut solved_at: Option<f64> = None;
    for (step, &target) in opts.tx_levels().iter().enumerate() {
        // levels still to solve for this step; the top is attempted next
        let mut pending = vec![target];
        let mut refinements = 0;
        while let Some(&g) = pending.last() {
            circuit.tx_level = g;
            circuit.tx_blend = g / opts.tx_g_init;
            let out = newton_iterate(&circuit, state.clone(), opts, &mut lu, &mut trace);
            iterations += out.iterations;
            last_norm = out.residual_norm;
            if out.converged {
                state = out.state;
                solved_at = Some(g);
                pending.pop();
                continue;
            }
            match solved_at {
                Some(prev) if refinements < opts.tx_refinements => {
                    let mid = if g > 0.0 { (prev * g).sqrt() } else { 0.1 * prev };
                    pending.push(mid);
                    refinements += 1;
                }
                _ => {
                    return PFSolution {
                        state: out.state,
                        converged: false,
                        iterations,
                        used_tx_stepping: true,
                        q_limit_switches: Vec::new(),
                        clamps: circuit.clamps.clone(),
                        residual_norm: out.residual_norm,
                        failure: Some(SolveFailure::TxStep { step, level: g, residual: out.residual_norm }),
                        trace,
                    };
                }
            }
        }
    }
    PFSolution {
        state,
        converged: true,
        iterations,
        used_tx_stepping: true,
        q_limit_switches: Vec::new(),
        clamps: circuit.clamps.clone(),
        residual_norm: last_norm,
        failure: None,
        trace,
    }
}

/// Absolute slack on reactive limits before a bus is switched.
const Q_TOL: f64 = 1e-9;
/// Voltage margin past the setpoint required to release a clamped bus.
const V_RELEASE_TOL: f64 = 1e-9;

/// PV–PQ switching until every regulating generator sits inside its
/// reactive limits.
pub fn enforce_q_limits(case: &NetworkCase, solution: PFSolution, opts: &SolverOptions) -> PFSolution {
    if !solution.converged {
        return solution;
    }
    let circuit = match Circuit::new(case) {
        Ok(c) => c,
        Err(e) => return failed_setup(solution.state, e),
    };
    let pos = case.bus_index();
    let mut sol = solution;
    if sol.clamps.len() != circuit.pv.len() {
        sol.clamps = vec![None; circuit.pv.len()];
    }
    for round in 0..=opts.q_limit_rounds {
        let mut clamps = sol.clamps.clone();
        let mut changed = false;
        for (k, unit) in circuit.pv.iter().enumerate() {
            let vm = sol.state.voltage(pos[&unit.bus]).norm();
            match clamps[k] {
                None => {
                    let q = sol.state.q_gen[k];
                    let limit = if q > unit.q_max + Q_TOL {
                        Some((QLimit::Max, unit.q_max))
                    } else if q < unit.q_min - Q_TOL {
                        Some((QLimit::Min, unit.q_min))
                    } else {
                        None
                    };
                    if let Some((limit, value)) = limit {
                        clamps[k] = Some(value);
                        sol.q_limit_switches.push(QLimitSwitch { bus: unit.bus, limit });
                        changed = true;
                    }
                }
                Some(c) => {
                    let at_max = c == unit.q_max;
                    let release = if at_max { vm > unit.v_set + V_RELEASE_TOL } else { vm < unit.v_set - V_RELEASE_TOL };
                    if release {
                        clamps[k] = None;
                        sol.q_limit_switches.retain(|s| s.bus != unit.bus);
                        changed = true;
                    }
                }
            }
        }
        if !changed {
            return sol;
        }
        if round == opts.q_limit_rounds {
            break;
        }
        let prior_iters = sol.iterations;
        let prior_tx = sol.used_tx_stepping;
        let switches = std::mem::take(&mut sol.q_limit_switches);
        let mut trace = std::mem::take(&mut sol.trace);
        let mut next = newton_with_clamps(case, &sol.state, Some(&clamps), opts);
        if !next.converged && opts.tx_fallback {
            next = tx_stepping_with_clamps(case, Some(&clamps), opts);
        }
        trace.append(&mut next.trace);
        next.trace = trace;
        next.iterations += prior_iters;
        next.used_tx_stepping |= prior_tx;
        next.q_limit_switches = switches;
        if !next.converged {
            next.failure = Some(SolveFailure::QLimitResolve { round });
            return next;
        }
        sol = next;
    }
    sol.converged = false;
    sol.failure = Some(SolveFailure::QLimitCycle { rounds: opts.q_limit_rounds });
    sol
}

/// Newton from the warm start (flat start if absent), Tx-stepping on
/// failure, then reactive-limit enforcement.
pub fn robust_solve(case: &NetworkCase, warm_start: Option<&SplitCircuitState>, opts: &SolverOptions) -> PFSolution {
    let flat;
    let init = match warm_start {
        Some(w) if w.v_real.len() == case.buses.len() && w.q_gen.len() == crate::circuit::pv_units(case).len() => w,
        _ => {
            flat = SplitCircuitState::flat_start(case);
            &flat
        }
    };
    let mut sol = newton_solve(case, init, opts);
    if !sol.converged && opts.tx_fallback {
        let first = sol.iterations;
        let mut trace = std::mem::take(&mut sol.trace);
        sol = tx_stepping_solve(case, opts);
        sol.iterations += first;
        trace.append(&mut sol.trace);
        sol.trace = trace;
    }
    if sol.converged && opts.enforce_q_limits {
        sol = enforce_q_limits(case, sol, opts);
    }
    sol
}

/// Slack voltage as a complex phasor.
pub fn slack_voltage(case: &NetworkCase, state: &SplitCircuitState) -> Option<Complex64> {
    let k = case.buses.iter().position(|b| b.kind == BusKind::Slack)?;
    Some(state.voltage(k))
}

#[cfg(test)]
mod tests;
