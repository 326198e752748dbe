//! Study aggregation and its JSON / text / CSV renderings.

use std::io::{self, Write};

use serde::Serialize;

use super::{CiTarget, Probe, SampleResult, StopReason, StudyConfig, Tally, UncertaintySpec};
use crate::case::NetworkCase;
use crate::solver::{classify, ClassKind, LimitSpec, PFSolution, SolverOptions};
use crate::stats::{histogram, BinaryEstimate, Bins, ConfInterval, ConfLevel, Histogram};

/// Everything needed to rerun the study. The worker count is left out on
/// purpose: it cannot change the result.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StudyEcho {
    pub version: &'static str,
    pub case: String,
    pub buses: usize,
    pub seed: u64,
    pub max_samples: usize,
    pub ci_target: Option<CiTarget>,
    pub warm_start: bool,
    pub predict_angles: bool,
    pub uncertainty: UncertaintySpec,
    pub probes: Vec<Probe>,
    pub solver: SolverOptions,
    pub limits: LimitSpec,
}

impl StudyEcho {
    pub fn new(
        case: &NetworkCase,
        spec: &UncertaintySpec,
        config: &StudyConfig,
        opts: &SolverOptions,
        limits: &LimitSpec,
    ) -> Self {
        StudyEcho {
            version: env!("CARGO_PKG_VERSION"),
            case: case.name.clone(),
            buses: case.buses.len(),
            seed: config.seed,
            max_samples: config.max_samples,
            ci_target: config.ci_target,
            warm_start: config.warm_start,
            predict_angles: config.predict_angles,
            uncertainty: spec.clone(),
            probes: config.probes.clone(),
            solver: opts.clone(),
            limits: *limits,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BaseCaseSummary {
    pub converged: bool,
    pub class: ClassKind,
    pub iterations: usize,
    pub used_tx_stepping: bool,
    pub q_limit_switches: usize,
    pub residual_norm: f64,
    /// Why the base case failed, if it did.
    pub diagnostic: Option<String>,
}

impl BaseCaseSummary {
    pub fn new(case: &NetworkCase, sol: &PFSolution, limits: &LimitSpec) -> Self {
        BaseCaseSummary {
            converged: sol.converged,
            class: classify(case, sol, limits).kind(),
            iterations: sol.iterations,
            used_tx_stepping: sol.used_tx_stepping,
            q_limit_switches: sol.q_limit_switches.len(),
            residual_norm: sol.residual_norm,
            diagnostic: sol.failure.as_ref().map(|f| f.to_string()),
        }
    }

    /// Summary for a case that could not even be set up (e.g. an outage
    /// that splits the network).
    pub fn infeasible(diagnostic: String) -> Self {
        BaseCaseSummary {
            converged: false,
            class: ClassKind::VoltageCollapse,
            iterations: 0,
            used_tx_stepping: false,
            q_limit_switches: 0,
            residual_norm: f64::INFINITY,
            diagnostic: Some(diagnostic),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ClassEstimate {
    pub class: ClassKind,
    pub count: u64,
    pub p_hat: f64,
    pub ci95: ConfInterval,
    pub ci99: ConfInterval,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SampleStats {
    pub tx_stepping: u64,
    pub mean_iterations: f64,
    pub max_iterations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProbeHistogram {
    pub probe: Probe,
    pub unit: &'static str,
    pub histogram: Histogram<ClassKind>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StudyReport {
    pub n: u64,
    pub stop_reason: StopReason,
    pub base_feasible: bool,
    pub base_case: BaseCaseSummary,
    /// One entry per class, in [`ClassKind::ALL`] order.
    pub classes: Vec<ClassEstimate>,
    pub sample_stats: SampleStats,
    pub histograms: Vec<ProbeHistogram>,
    pub config: StudyEcho,
    #[serde(skip)]
    pub samples: Vec<SampleResult>,
}

impl StudyReport {
    pub fn from_samples(config: StudyEcho, base_case: BaseCaseSummary, samples: Vec<SampleResult>, stop: StopReason) -> Self {
        let mut tally = Tally::default();
        for s in &samples {
            tally.add(s.outcome.kind());
        }
        let n = tally.total();
        let classes = ClassKind::ALL
            .iter()
            .map(|&class| {
                let count = tally.get(class);
                let est = BinaryEstimate::new(count, n).expect("a study draws at least one sample");
                ClassEstimate { class, count, p_hat: est.p_hat, ci95: est.ci(ConfLevel::CL95), ci99: est.ci(ConfLevel::CL99) }
            })
            .collect();
        let sample_stats = SampleStats {
            tx_stepping: samples.iter().filter(|s| s.used_tx_stepping).count() as u64,
            mean_iterations: samples.iter().map(|s| s.iterations as f64).sum::<f64>() / n as f64,
            max_iterations: samples.iter().map(|s| s.iterations).max().unwrap_or(0),
        };
        let histograms = config
            .probes
            .iter()
            .enumerate()
            .map(|(k, probe)| {
                let (values, labels): (Vec<f64>, Vec<ClassKind>) = samples
                    .iter()
                    .filter_map(|s| s.probe_values.as_ref().map(|v| (v[k], s.outcome.kind())))
                    .unzip();
                let mut histogram =
                    histogram(&values, &labels, Some(Bins::FreedmanDiaconis)).expect("equal lengths, valid bins");
                histogram.classes.sort_by_key(|c| c.label);
                ProbeHistogram { probe: *probe, unit: probe.unit(), histogram }
            })
            .collect();
        StudyReport { n, stop_reason: stop, base_feasible: true, base_case, classes, sample_stats, histograms, config, samples }
    }

    /// Report for an infeasible base case: collapse is certain, nothing was
    /// sampled, and every interval is the uninformative [0, 1].
    pub fn degenerate(config: StudyEcho, base_case: BaseCaseSummary) -> Self {
        let classes = ClassKind::ALL
            .iter()
            .map(|&class| ClassEstimate {
                class,
                count: 0,
                p_hat: if class == ClassKind::VoltageCollapse { 1.0 } else { 0.0 },
                ci95: ConfInterval::degenerate(ConfLevel::CL95),
                ci99: ConfInterval::degenerate(ConfLevel::CL99),
            })
            .collect();
        let histograms = config
            .probes
            .iter()
            .map(|p| ProbeHistogram {
                probe: *p,
                unit: p.unit(),
                histogram: histogram::<ClassKind>(&[], &[], None).expect("empty input"),
            })
            .collect();
        StudyReport {
            n: 0,
            stop_reason: StopReason::BaseCaseInfeasible,
            base_feasible: false,
            base_case,
            classes,
            sample_stats: SampleStats { tx_stepping: 0, mean_iterations: 0.0, max_iterations: 0 },
            histograms,
            config,
            samples: Vec::new(),
        }
    }

    pub fn estimate(&self, class: ClassKind) -> &ClassEstimate {
        self.classes.iter().find(|c| c.class == class).expect("every class is reported")
    }

    /// Pretty-printed JSON, newline terminated. Angles are in radians.
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report is serializable");
        s.push('\n');
        s
    }

    /// Aligned table of class probabilities in percent.
    pub fn write_text(&self, mut w: impl Write) -> io::Result<()> {
        let c = &self.config;
        writeln!(w, "case {}  ({} buses)  {}  seed {}", c.case, c.buses, c.uncertainty.distribution, c.seed)?;
        writeln!(w, "samples {}  stop {}", self.n, self.stop_reason)?;
        let b = &self.base_case;
        match &b.diagnostic {
            Some(d) if !self.base_feasible => writeln!(w, "base case INFEASIBLE: {d}")?,
            _ => writeln!(
                w,
                "base case {}  iterations {}  tx-stepping {}  q-limit switches {}",
                b.class, b.iterations, b.used_tx_stepping, b.q_limit_switches
            )?,
        }
        writeln!(w)?;
        writeln!(
            w,
            "{:<18} {:>8} {:>9} {:>9} {:>21} {:>21}",
            "class", "count", "p [%]", "±ci99 [%]", "95% interval [%]", "99% interval [%]"
        )?;
        for e in &self.classes {
            let iv = |ci: &ConfInterval| format!("[{:.3}, {:.3}]", 100.0 * ci.lower, 100.0 * ci.upper);
            writeln!(
                w,
                "{:<18} {:>8} {:>9.3} {:>9.3} {:>21} {:>21}",
                e.class.name(),
                e.count,
                100.0 * e.p_hat,
                100.0 * e.ci99.half_width,
                iv(&e.ci95),
                iv(&e.ci99)
            )?;
        }
        if self.n > 0 && self.n < crate::stats::SMALL_SAMPLE {
            writeln!(w, "note: fewer than {} samples; intervals are rough", crate::stats::SMALL_SAMPLE)?;
        }
        if self.n > 0 {
            let s = &self.sample_stats;
            writeln!(
                w,
                "\nsolver: mean {:.2} iterations, max {}, tx-stepping in {} sample(s)",
                s.mean_iterations, s.max_iterations, s.tx_stepping
            )?;
        }
        for h in &self.histograms {
            if h.histogram.is_empty() {
                continue;
            }
            let (lo, hi) = (h.histogram.edges[0], h.histogram.edges[h.histogram.bin_count()]);
            let (lo, hi, unit) = match h.probe {
                Probe::BranchAngle(_) => (lo.to_degrees(), hi.to_degrees(), "deg"),
                Probe::BusVoltage(_) => (lo, hi, "pu"),
            };
            writeln!(w, "histogram {}: {} bins over [{lo:.4}, {hi:.4}] {unit}", h.probe, h.histogram.bin_count())?;
        }
        Ok(())
    }

    pub fn text(&self) -> String {
        let mut out = Vec::new();
        self.write_text(&mut out).expect("writing to memory");
        String::from_utf8(out).expect("utf-8")
    }

    /// One row per sample: index, class, solver effort, then probe values
    /// (radians for angles; empty for collapsed samples).
    pub fn write_ledger_csv(&self, mut w: impl Write) -> io::Result<()> {
        write!(w, "index,outcome,used_tx_stepping,iterations")?;
        for p in &self.config.probes {
            write!(w, ",{p} [{}]", p.unit())?;
        }
        writeln!(w)?;
        for s in &self.samples {
            write!(w, "{},{},{},{}", s.index, s.outcome.kind(), s.used_tx_stepping, s.iterations)?;
            for k in 0..self.config.probes.len() {
                match &s.probe_values {
                    Some(v) => write!(w, ",{}", v[k])?,
                    None => write!(w, ",")?,
                }
            }
            writeln!(w)?;
        }
        Ok(())
    }
}
