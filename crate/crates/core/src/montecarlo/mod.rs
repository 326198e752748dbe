//! Simple random sampling over load uncertainty.
//!
//! Every sample draws from its own Mersenne Twister stream keyed by
//! `(seed, index)`, samples are evaluated in batches of [`BATCH`] and the
//! stopping rule is only consulted between batches, so a study's outcome
//! does not depend on how many worker threads evaluated it.

mod report;
mod warm;

pub use report::{BaseCaseSummary, ClassEstimate, ProbeHistogram, SampleStats, StudyEcho, StudyReport};
pub use warm::AnglePredictor;

use std::fmt;
use std::str::FromStr;

use rand::RngExt;
use rand_distr::StandardNormal;
use rand_mt::Mt64;
use rayon::prelude::*;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::case::{BranchRef, NetworkCase, Violation};
use crate::circuit::SplitCircuitState;
use crate::solver::{classify, robust_solve, ClassKind, LimitSpec, OperatingClass, PFSolution, SolverOptions};
use crate::stats::{ci_binary, ConfLevel};

/// Samples evaluated between two checks of the stopping rule.
pub const BATCH: usize = 100;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StudyError {
    #[error("invalid case: {}", .0.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; "))]
    InvalidCase(Vec<Violation>),
    #[error("invalid uncertainty spec: {0}")]
    Spec(String),
    #[error("invalid study config: {0}")]
    Config(String),
    #[error("invalid solver options: {0}")]
    Options(String),
    #[error("invalid probe: {0}")]
    Probe(String),
    #[error("worker pool: {0}")]
    Pool(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum LoadDistribution {
    /// Standard deviation in percent of each nominal value.
    Normal { sigma_pct: f64 },
    /// Half-range in percent of each nominal value.
    Uniform { range_pct: f64 },
}

impl LoadDistribution {
    pub fn width_pct(&self) -> f64 {
        match *self {
            LoadDistribution::Normal { sigma_pct } => sigma_pct,
            LoadDistribution::Uniform { range_pct } => range_pct,
        }
    }
}

impl fmt::Display for LoadDistribution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LoadDistribution::Normal { sigma_pct } => write!(f, "normal σ={sigma_pct}%"),
            LoadDistribution::Uniform { range_pct } => write!(f, "uniform ±{range_pct}%"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LoadScope {
    #[default]
    AllLoads,
    BusList(Vec<usize>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UncertaintySpec {
    pub distribution: LoadDistribution,
    #[serde(default)]
    pub scope: LoadScope,
}

impl UncertaintySpec {
    pub fn normal(sigma_pct: f64) -> Self {
        UncertaintySpec { distribution: LoadDistribution::Normal { sigma_pct }, scope: LoadScope::AllLoads }
    }

    pub fn uniform(range_pct: f64) -> Self {
        UncertaintySpec { distribution: LoadDistribution::Uniform { range_pct }, scope: LoadScope::AllLoads }
    }

    pub fn validate(&self, case: &NetworkCase) -> Result<(), StudyError> {
        let w = self.distribution.width_pct();
        if !(w > 0.0 && w.is_finite()) {
            return Err(StudyError::Spec(format!("width must be a positive percentage, got {w}")));
        }
        if let LoadScope::BusList(buses) = &self.scope {
            if buses.is_empty() {
                return Err(StudyError::Spec("bus list is empty".into()));
            }
            for id in buses {
                if case.bus(*id).is_none() {
                    return Err(StudyError::Spec(format!("bus {id} not in case")));
                }
                if !case.loads.iter().any(|l| l.bus == *id) {
                    return Err(StudyError::Spec(format!("bus {id} carries no load")));
                }
            }
        }
        Ok(())
    }

    fn in_scope(&self, bus: usize) -> bool {
        match &self.scope {
            LoadScope::AllLoads => true,
            LoadScope::BusList(b) => b.contains(&bus),
        }
    }
}

/// Quantity recorded for every converged sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Probe {
    /// `arg(V_from · conj(V_to))` in radians.
    BranchAngle(BranchRef),
    /// `|V|` in per-unit.
    BusVoltage(usize),
}

impl Probe {
    pub fn unit(&self) -> &'static str {
        match self {
            Probe::BranchAngle(_) => "rad",
            Probe::BusVoltage(_) => "pu",
        }
    }
}

impl fmt::Display for Probe {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Probe::BranchAngle(b) => write!(f, "angle:{b}"),
            Probe::BusVoltage(bus) => write!(f, "vm:{bus}"),
        }
    }
}

/// `angle:F-T[#k]` or `vm:BUS`.
impl FromStr for Probe {
    type Err = StudyError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let err = || StudyError::Probe(format!("{s:?} (expected angle:F-T or vm:BUS)"));
        let (kind, arg) = s.trim().split_once(':').ok_or_else(err)?;
        match kind.trim() {
            "angle" => Ok(Probe::BranchAngle(arg.parse().map_err(|_| err())?)),
            "vm" => Ok(Probe::BusVoltage(arg.trim().parse().map_err(|_| err())?)),
            _ => Err(err()),
        }
    }
}

impl Serialize for Probe {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Probe {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        String::deserialize(d)?.parse().map_err(serde::de::Error::custom)
    }
}

/// Stop once the chosen class's interval half-width drops below `half_width`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CiTarget {
    pub class: ClassKind,
    pub level: ConfLevel,
    pub half_width: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StudyConfig {
    pub max_samples: usize,
    pub ci_target: Option<CiTarget>,
    pub seed: u64,
    /// Worker threads; 0 uses every available core.
    pub workers: usize,
    pub probes: Vec<Probe>,
    /// Start each sample from the base-case solution instead of flat.
    pub warm_start: bool,
    /// Rotate the warm start by a DC estimate of each sample's angle change.
    pub predict_angles: bool,
}

impl Default for StudyConfig {
    fn default() -> Self {
        StudyConfig {
            max_samples: 1000,
            ci_target: None,
            seed: 1,
            workers: 0,
            probes: Vec::new(),
            warm_start: true,
            predict_angles: true,
        }
    }
}

impl StudyConfig {
    pub fn check(&self) -> Result<(), StudyError> {
        if self.max_samples == 0 {
            return Err(StudyError::Config("max_samples must be at least 1".into()));
        }
        if let Some(t) = &self.ci_target {
            if !(t.half_width > 0.0 && t.half_width.is_finite()) {
                return Err(StudyError::Config(format!("ci_target half_width must be positive, got {}", t.half_width)));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    MaxSamples,
    CiTargetMet,
    /// The deterministic base case has no solution; no samples were drawn.
    BaseCaseInfeasible,
}

impl fmt::Display for StopReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            StopReason::MaxSamples => "max_samples",
            StopReason::CiTargetMet => "ci_target_met",
            StopReason::BaseCaseInfeasible => "base_case_infeasible",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SampleResult {
    pub index: usize,
    pub outcome: OperatingClass,
    pub used_tx_stepping: bool,
    pub iterations: usize,
    /// One value per configured probe; absent for collapsed samples.
    pub probe_values: Option<Vec<f64>>,
}

/// Random stream of one sample, keyed by both words so neighbouring seeds
/// and indices do not share state.
pub fn rng_for_sample(seed: u64, index: u64) -> Mt64 {
    Mt64::new_with_key([seed, index])
}

/// Load indices in the order draws are consumed: by bus id, then by
/// position among the loads of that bus.
pub fn draw_order(case: &NetworkCase) -> Vec<usize> {
    let mut order: Vec<usize> = (0..case.loads.len()).collect();
    order.sort_by_key(|&i| case.loads[i].bus);
    order
}

/// Copy of `case` with every in-scope load's P and Q redrawn independently.
/// Draws are not truncated, so a small load may change sign.
pub fn sample_loads(case: &NetworkCase, spec: &UncertaintySpec, rng: &mut Mt64) -> NetworkCase {
    let mut out = case.clone();
    for i in draw_order(case) {
        let load = &mut out.loads[i];
        if !spec.in_scope(load.bus) {
            continue;
        }
        load.p_nom = draw(load.p_nom, &spec.distribution, rng);
        load.q_nom = draw(load.q_nom, &spec.distribution, rng);
    }
    out
}

fn draw(nominal: f64, dist: &LoadDistribution, rng: &mut Mt64) -> f64 {
    match *dist {
        LoadDistribution::Normal { sigma_pct } => {
            let z: f64 = rng.sample(StandardNormal);
            nominal + sigma_pct / 100.0 * nominal.abs() * z
        }
        LoadDistribution::Uniform { range_pct } => {
            let u: f64 = rng.random();
            nominal + range_pct / 100.0 * nominal.abs() * (2.0 * u - 1.0)
        }
    }
}

/// Turns one random stream into one classified sample. The power-flow
/// evaluator is the production implementation; tests substitute stubs.
pub trait SampleEvaluator: Sync {
    fn evaluate(&self, index: usize, rng: &mut Mt64) -> SampleResult;
}

/// Perturb, solve from the base solution, enforce reactive limits, classify.
pub struct PowerFlowEvaluator<'a> {
    case: &'a NetworkCase,
    spec: &'a UncertaintySpec,
    opts: &'a SolverOptions,
    limits: &'a LimitSpec,
    warm_start: Option<SplitCircuitState>,
    predictor: Option<AnglePredictor>,
    probes: Vec<ResolvedProbe>,
}

#[derive(Debug, Clone, Copy)]
enum ResolvedProbe {
    Angle { from: usize, to: usize },
    Voltage(usize),
}

fn resolve_probes(case: &NetworkCase, probes: &[Probe]) -> Result<Vec<ResolvedProbe>, StudyError> {
    let pos = case.bus_index();
    probes
        .iter()
        .map(|p| match p {
            Probe::BranchAngle(r) => {
                let k = case.find_branch(r).ok_or_else(|| StudyError::Probe(format!("{p}: no such branch")))?;
                let br = &case.branches[k];
                Ok(ResolvedProbe::Angle { from: pos[&br.from], to: pos[&br.to] })
            }
            Probe::BusVoltage(id) => pos
                .get(id)
                .map(|&k| ResolvedProbe::Voltage(k))
                .ok_or_else(|| StudyError::Probe(format!("{p}: no such bus"))),
        })
        .collect()
}

impl<'a> PowerFlowEvaluator<'a> {
    pub fn new(
        case: &'a NetworkCase,
        spec: &'a UncertaintySpec,
        opts: &'a SolverOptions,
        limits: &'a LimitSpec,
        probes: &[Probe],
        warm_start: Option<SplitCircuitState>,
    ) -> Result<Self, StudyError> {
        Ok(PowerFlowEvaluator { case, spec, opts, limits, warm_start, predictor: None, probes: resolve_probes(case, probes)? })
    }

    /// Adjust the warm start to each sample's loads before solving.
    pub fn with_angle_predictor(mut self) -> Self {
        self.predictor = AnglePredictor::new(self.case);
        self
    }

    fn probe_values(&self, sol: &PFSolution) -> Vec<f64> {
        self.probes
            .iter()
            .map(|p| match *p {
                ResolvedProbe::Angle { from, to } => (sol.state.voltage(from) * sol.state.voltage(to).conj()).arg(),
                ResolvedProbe::Voltage(k) => sol.state.voltage(k).norm(),
            })
            .collect()
    }
}

impl SampleEvaluator for PowerFlowEvaluator<'_> {
    fn evaluate(&self, index: usize, rng: &mut Mt64) -> SampleResult {
        let sample = sample_loads(self.case, self.spec, rng);
        let start = match (&self.warm_start, &self.predictor) {
            (Some(base), Some(p)) => Some(p.predict(self.case, &sample, base)),
            (base, _) => base.clone(),
        };
        let sol = robust_solve(&sample, start.as_ref(), self.opts);
        let outcome = classify(&sample, &sol, self.limits);
        let probe_values = (outcome != OperatingClass::VoltageCollapse).then(|| self.probe_values(&sol));
        SampleResult { index, outcome, used_tx_stepping: sol.used_tx_stepping, iterations: sol.iterations, probe_values }
    }
}

/// Per-class sample counts, indexed like [`ClassKind::ALL`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Tally {
    pub counts: [u64; 5],
}

impl Tally {
    pub fn add(&mut self, class: ClassKind) {
        self.counts[class_slot(class)] += 1;
    }

    pub fn get(&self, class: ClassKind) -> u64 {
        self.counts[class_slot(class)]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }
}

fn class_slot(class: ClassKind) -> usize {
    ClassKind::ALL.iter().position(|k| *k == class).expect("ALL lists every class")
}

/// Snapshot handed to progress callbacks after each batch.
#[derive(Debug, Clone, Copy)]
pub struct Progress {
    pub done: usize,
    pub max: usize,
    pub tally: Tally,
}

fn build_pool(workers: usize) -> Result<rayon::ThreadPool, StudyError> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| StudyError::Pool(e.to_string()))
}

/// Evaluates samples `0, 1, …` in batches until `max_samples` or until the
/// CI target is met. Results are in index order.
pub fn run_samples<E: SampleEvaluator>(
    evaluator: &E,
    config: &StudyConfig,
    progress: &mut dyn FnMut(Progress),
) -> Result<(Vec<SampleResult>, StopReason), StudyError> {
    config.check()?;
    let pool = build_pool(config.workers)?;
    let mut results: Vec<SampleResult> = Vec::with_capacity(config.max_samples.min(1 << 20));
    let mut tally = Tally::default();
    while results.len() < config.max_samples {
        let start = results.len();
        let end = (start + BATCH).min(config.max_samples);
        let batch: Vec<SampleResult> = pool.install(|| {
            (start..end)
                .into_par_iter()
                .map(|i| evaluator.evaluate(i, &mut rng_for_sample(config.seed, i as u64)))
                .collect()
        });
        for r in &batch {
            tally.add(r.outcome.kind());
        }
        results.extend(batch);
        progress(Progress { done: results.len(), max: config.max_samples, tally });
        if let Some(t) = &config.ci_target {
            let ci = ci_binary(tally.get(t.class), tally.total(), t.level).expect("n ≥ 1 after a batch");
            if ci.half_width < t.half_width {
                return Ok((results, StopReason::CiTargetMet));
            }
        }
    }
    Ok((results, StopReason::MaxSamples))
}

/// Full study: validate, solve the base case, sample, aggregate.
pub fn run_study(
    case: &NetworkCase,
    spec: &UncertaintySpec,
    config: &StudyConfig,
    opts: &SolverOptions,
    limits: &LimitSpec,
) -> Result<StudyReport, StudyError> {
    run_study_with_progress(case, spec, config, opts, limits, &mut |_| {})
}

pub fn run_study_with_progress(
    case: &NetworkCase,
    spec: &UncertaintySpec,
    config: &StudyConfig,
    opts: &SolverOptions,
    limits: &LimitSpec,
    progress: &mut dyn FnMut(Progress),
) -> Result<StudyReport, StudyError> {
    let violations = case.validate();
    if !violations.is_empty() {
        return Err(StudyError::InvalidCase(violations));
    }
    spec.validate(case)?;
    config.check()?;
    opts.check().map_err(StudyError::Options)?;
    limits.check().map_err(StudyError::Options)?;
    resolve_probes(case, &config.probes)?;

    let echo = StudyEcho::new(case, spec, config, opts, limits);
    let base = robust_solve(case, None, opts);
    let base_summary = BaseCaseSummary::new(case, &base, limits);
    if !base.converged {
        return Ok(StudyReport::degenerate(echo, base_summary));
    }
    let warm = config.warm_start.then(|| base.state.clone());
    let mut evaluator = PowerFlowEvaluator::new(case, spec, opts, limits, &config.probes, warm)?;
    if config.predict_angles {
        evaluator = evaluator.with_angle_predictor();
    }
    let (samples, stop) = run_samples(&evaluator, config, progress)?;
    Ok(StudyReport::from_samples(echo, base_summary, samples, stop))
}
