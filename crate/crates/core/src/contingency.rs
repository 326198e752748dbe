//! Outage screening: rank elements, enumerate N-1/N-2 sets and run one
//! Monte Carlo study per set.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::io::{self, Write};
use std::str::FromStr;

use rand_mt::Mt64;
use rayon::prelude::*;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::case::{BranchRef, BusKind, NetworkCase, Outage, RefParseError};
use crate::montecarlo::{
    run_study, BaseCaseSummary, StudyConfig, StudyEcho, StudyError, StudyReport, UncertaintySpec,
};
use crate::solver::{branch_flows, robust_solve, ClassKind, LimitSpec, PFSolution, SolverOptions};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ContingencyError {
    #[error(transparent)]
    Study(#[from] StudyError),
    #[error("base case has no solution: {0}")]
    BaseInfeasible(String),
    #[error("invalid contingency spec: {0}")]
    Spec(String),
}

/// How branch loading is measured when picking the most loaded branches.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BranchLoading {
    /// Apparent power entering at the from end.
    #[default]
    FromMva,
    /// Larger of the two terminal apparent powers.
    MaxMva,
    /// Larger terminal apparent power over `rate_a`; unrated branches rank last.
    PercentOfRating,
}

/// An unordered set of simultaneous outages. Printed as the outages
/// separated by spaces, e.g. `G2067 B12854-6522`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct OutageSet(pub Vec<Outage>);

impl OutageSet {
    fn canonical(&self) -> Vec<Outage> {
        let mut v = self.0.clone();
        v.sort();
        v
    }

    /// Applies every outage in order.
    pub fn apply(&self, case: &NetworkCase) -> Result<NetworkCase, crate::case::OutageError> {
        let mut c = case.clone();
        for o in &self.0 {
            c = c.apply_outage(o)?;
        }
        Ok(c)
    }
}

impl fmt::Display for OutageSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(|o| o.to_string()).collect();
        f.write_str(&parts.join(" "))
    }
}

/// Outages separated by whitespace, commas or semicolons.
impl FromStr for OutageSet {
    type Err = RefParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parts: Vec<Outage> = s
            .split(|c: char| c.is_whitespace() || c == ',' || c == ';')
            .filter(|p| !p.is_empty())
            .map(str::parse)
            .collect::<Result<_, _>>()?;
        if parts.is_empty() {
            return Err(RefParseError { what: "outage set", text: s.to_string() });
        }
        Ok(OutageSet(parts))
    }
}

impl Serialize for OutageSet {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for OutageSet {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        String::deserialize(d)?.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ContingencySpec {
    /// Largest generators taken out one at a time.
    pub n1_generators: usize,
    /// For each of those, the largest remaining generators paired with it.
    pub n2_generators: usize,
    /// Most loaded branches taken out one at a time.
    pub n1_branches: usize,
    /// Generator × branch pairs: (top generators, top branches).
    pub n2_gen_branch: (usize, usize),
    pub explicit: Vec<OutageSet>,
    pub branch_loading: BranchLoading,
    /// Also study the intact network first.
    pub include_base: bool,
    /// Run contingencies concurrently with serial sampling inside each.
    pub parallel_contingencies: bool,
}

impl Default for ContingencySpec {
    fn default() -> Self {
        ContingencySpec {
            n1_generators: 0,
            n2_generators: 0,
            n1_branches: 0,
            n2_gen_branch: (0, 0),
            explicit: Vec::new(),
            branch_loading: BranchLoading::FromMva,
            include_base: true,
            parallel_contingencies: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GeneratorRank {
    pub bus: usize,
    /// Dispatched real power of all in-service units at the bus (pu).
    pub p: f64,
}

/// Generator buses by descending dispatched real power (the slack's from
/// the solution), ties by ascending bus id.
pub fn rank_generators(case: &NetworkCase, base: &PFSolution) -> Vec<GeneratorRank> {
    let slack_p: BTreeMap<usize, f64> = base
        .generation(case)
        .into_iter()
        .filter(|(bus, _)| case.bus(*bus).is_some_and(|b| b.kind == BusKind::Slack))
        .map(|(bus, s)| (bus, s.re))
        .collect();
    let mut by_bus: BTreeMap<usize, f64> = BTreeMap::new();
    for g in case.generators.iter().filter(|g| g.in_service) {
        *by_bus.entry(g.bus).or_default() += g.p_set;
    }
    for (bus, p) in slack_p {
        by_bus.insert(bus, p);
    }
    let mut ranks: Vec<GeneratorRank> = by_bus.into_iter().map(|(bus, p)| GeneratorRank { bus, p }).collect();
    ranks.sort_by(|a, b| b.p.total_cmp(&a.p).then(a.bus.cmp(&b.bus)));
    ranks
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BranchRank {
    pub branch: BranchRef,
    /// In the unit of the chosen measure: pu MVA, or a fraction of rating.
    pub loading: f64,
}

/// In-service branches by descending loading, ties by (from, to) ascending.
pub fn rank_branches(case: &NetworkCase, base: &PFSolution, measure: BranchLoading) -> Vec<BranchRank> {
    let rates: Vec<f64> = case.branches.iter().filter(|b| b.in_service).map(|b| b.rate_a).collect();
    let mut ranks: Vec<BranchRank> = branch_flows(case, base)
        .iter()
        .zip(rates)
        .map(|(fl, rate)| BranchRank {
            branch: fl.branch,
            loading: match measure {
                BranchLoading::FromMva => fl.s_from.norm(),
                BranchLoading::MaxMva => fl.max_apparent(),
                BranchLoading::PercentOfRating if rate > 0.0 => fl.max_apparent() / rate,
                BranchLoading::PercentOfRating => f64::NEG_INFINITY,
            },
        })
        .collect();
    ranks.sort_by(|a, b| b.loading.total_cmp(&a.loading).then(a.branch.cmp(&b.branch)));
    ranks
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Enumeration {
    pub sets: Vec<OutageSet>,
    pub warnings: Vec<String>,
}

/// Deterministic, duplicate-free list of outage sets: N-1 generators, N-2
/// generator pairs, N-1 branches, generator × branch pairs, explicit sets.
pub fn enumerate(case: &NetworkCase, base: &PFSolution, spec: &ContingencySpec) -> Enumeration {
    let gens = rank_generators(case, base);
    let branches = rank_branches(case, base, spec.branch_loading);
    let mut warnings = Vec::new();
    let mut take = |want: usize, have: usize, what: &str| {
        if want > have {
            warnings.push(format!("requested {want} {what}, only {have} available"));
        }
        want.min(have)
    };
    let k1 = take(spec.n1_generators, gens.len(), "N-1 generators");
    let m2 = take(spec.n2_generators, gens.len().saturating_sub(1), "N-2 partner generators");
    let b1 = take(spec.n1_branches, branches.len(), "N-1 branches");
    let (gk, bj) = spec.n2_gen_branch;
    let gk = take(gk, gens.len(), "generators for generator × branch pairs");
    let bj = take(bj, branches.len(), "branches for generator × branch pairs");

    let gen = |r: &GeneratorRank| Outage::Generator { bus: r.bus };
    let mut candidates: Vec<OutageSet> = Vec::new();
    candidates.extend(gens[..k1].iter().map(|g| OutageSet(vec![gen(g)])));
    for first in &gens[..k1] {
        for second in gens.iter().filter(|g| g.bus != first.bus).take(m2) {
            candidates.push(OutageSet(vec![gen(first), gen(second)]));
        }
    }
    candidates.extend(branches[..b1].iter().map(|b| OutageSet(vec![Outage::Branch(b.branch)])));
    for g in &gens[..gk] {
        for b in &branches[..bj] {
            candidates.push(OutageSet(vec![gen(g), Outage::Branch(b.branch)]));
        }
    }
    candidates.extend(spec.explicit.iter().cloned());

    let mut seen = HashSet::new();
    let sets = candidates.into_iter().filter(|s| seen.insert(s.canonical())).collect();
    Enumeration { sets, warnings }
}

/// Seed of the `ordinal`-th contingency's study. Depends only on the study
/// seed and the ordinal, so appending contingencies leaves earlier ones alone.
pub fn contingency_seed(seed: u64, ordinal: usize) -> u64 {
    // a third key word keeps these streams apart from the per-sample ones
    Mt64::new_with_key([seed, ordinal as u64, 0x6f75_7461_6765]).next_u64()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ContingencyResult {
    /// 1-based position in the enumeration.
    pub ordinal: usize,
    /// `C<ordinal>: <outages>`.
    pub label: String,
    pub outages: OutageSet,
    pub seed: u64,
    pub base_feasible: bool,
    /// Degenerate (collapse certain, no samples) when the base is infeasible.
    pub report: StudyReport,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ContingencyStudy {
    /// Study of the intact network, when requested.
    pub base: Option<StudyReport>,
    pub generator_ranking: Vec<GeneratorRank>,
    pub branch_ranking: Vec<BranchRank>,
    pub warnings: Vec<String>,
    pub results: Vec<ContingencyResult>,
}

/// Parses a result label back into its ordinal and outage set.
pub fn parse_label(label: &str) -> Option<(usize, OutageSet)> {
    let (head, set) = label.split_once(':')?;
    let ordinal = head.trim().strip_prefix('C')?.parse().ok()?;
    Some((ordinal, set.parse().ok()?))
}

fn study_one(
    case: &NetworkCase,
    set: &OutageSet,
    ordinal: usize,
    uncertainty: &UncertaintySpec,
    config: &StudyConfig,
    opts: &SolverOptions,
    limits: &LimitSpec,
) -> Result<ContingencyResult, StudyError> {
    let seed = contingency_seed(config.seed, ordinal);
    let cfg = StudyConfig { seed, ..config.clone() };
    let label = format!("C{ordinal}: {set}");
    let infeasible = |diag: String| {
        let echo = StudyEcho::new(case, uncertainty, &cfg, opts, limits);
        StudyReport::degenerate(echo, BaseCaseSummary::infeasible(diag))
    };
    let report = match set.apply(case) {
        Err(e) => infeasible(e.to_string()),
        Ok(c) => {
            let violations = c.validate();
            if violations.is_empty() {
                run_study(&c, uncertainty, &cfg, opts, limits)?
            } else {
                let v: Vec<String> = violations.iter().map(|v| v.to_string()).collect();
                infeasible(v.join("; "))
            }
        }
    };
    Ok(ContingencyResult { ordinal, label, outages: set.clone(), seed, base_feasible: report.base_feasible, report })
}

/// Ranks, enumerates and studies every contingency, in enumeration order.
pub fn run_contingency_study(
    case: &NetworkCase,
    spec: &ContingencySpec,
    uncertainty: &UncertaintySpec,
    config: &StudyConfig,
    opts: &SolverOptions,
    limits: &LimitSpec,
) -> Result<ContingencyStudy, ContingencyError> {
    let violations = case.validate();
    if !violations.is_empty() {
        return Err(StudyError::InvalidCase(violations).into());
    }
    uncertainty.validate(case)?;
    config.check()?;
    opts.check().map_err(StudyError::Options)?;
    let base_sol = robust_solve(case, None, opts);
    if !base_sol.converged {
        let why = base_sol.failure.map(|f| f.to_string()).unwrap_or_default();
        return Err(ContingencyError::BaseInfeasible(why));
    }
    for set in &spec.explicit {
        if let Err(e) = set.apply(case) {
            if !matches!(e, crate::case::OutageError::IslandSplit { .. }) {
                return Err(ContingencyError::Spec(format!("{set}: {e}")));
            }
        }
    }
    let Enumeration { sets, warnings } = enumerate(case, &base_sol, spec);
    let base = if spec.include_base { Some(run_study(case, uncertainty, config, opts, limits)?) } else { None };

    let results: Vec<ContingencyResult> = if spec.parallel_contingencies {
        let inner = StudyConfig { workers: 1, ..config.clone() };
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(config.workers)
            .build()
            .map_err(|e| StudyError::Pool(e.to_string()))?;
        pool.install(|| {
            sets.par_iter()
                .enumerate()
                .map(|(i, set)| study_one(case, set, i + 1, uncertainty, &inner, opts, limits))
                .collect::<Result<_, _>>()
        })?
    } else {
        sets.iter()
            .enumerate()
            .map(|(i, set)| study_one(case, set, i + 1, uncertainty, config, opts, limits))
            .collect::<Result<_, _>>()?
    };
    Ok(ContingencyStudy {
        base,
        generator_ranking: rank_generators(case, &base_sol),
        branch_ranking: rank_branches(case, &base_sol, spec.branch_loading),
        warnings,
        results,
    })
}

impl ContingencyStudy {
    fn rows(&self) -> impl Iterator<Item = (String, &StudyReport)> {
        let base = self.base.iter().map(|r| ("C0: base".to_string(), r));
        base.chain(self.results.iter().map(|r| (r.label.clone(), &r.report)))
    }

    /// Risk table: one row per contingency with per-class estimates and
    /// both intervals (fractions, not percent).
    pub fn write_csv(&self, mut w: impl Write) -> io::Result<()> {
        write!(w, "label,seed,base_feasible,n")?;
        for k in ClassKind::ALL {
            write!(w, ",{k}_p,{k}_ci95_lower,{k}_ci95_upper,{k}_ci99_lower,{k}_ci99_upper")?;
        }
        writeln!(w, ",diagnostic")?;
        for (label, r) in self.rows() {
            write!(w, "{label},{},{},{}", r.config.seed, r.base_feasible, r.n)?;
            for e in &r.classes {
                write!(w, ",{},{},{},{},{}", e.p_hat, e.ci95.lower, e.ci95.upper, e.ci99.lower, e.ci99.upper)?;
            }
            let diag = if r.base_feasible { String::new() } else { r.base_case.diagnostic.clone().unwrap_or_default() };
            writeln!(w, ",\"{}\"", diag.replace('"', "'"))?;
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("serializable");
        s.push('\n');
        s
    }

    /// Summary with `p ± ci99` in percent per class.
    pub fn write_text(&self, mut w: impl Write) -> io::Result<()> {
        for msg in &self.warnings {
            writeln!(w, "warning: {msg}")?;
        }
        let width = self.rows().map(|(l, _)| l.len()).max().unwrap_or(5).max(5);
        write!(w, "{:<width$} {:>10} {:>6}", "label", "feasible", "n")?;
        for k in ClassKind::ALL {
            write!(w, " {:>20}", k.name())?;
        }
        writeln!(w)?;
        for (label, r) in self.rows() {
            let feasible = if r.base_feasible { "feasible" } else { "infeasible" };
            write!(w, "{label:<width$} {feasible:>10} {:>6}", r.n)?;
            for e in &r.classes {
                let cell = if r.base_feasible {
                    format!("{:.2} ± {:.2}", 100.0 * e.p_hat, 100.0 * e.ci99.half_width)
                } else {
                    format!("{:.2}", 100.0 * e.p_hat)
                };
                write!(w, " {cell:>20}")?;
            }
            writeln!(w)?;
        }
        Ok(())
    }

    pub fn text(&self) -> String {
        let mut out = Vec::new();
        self.write_text(&mut out).expect("writing to memory");
        String::from_utf8(out).expect("utf-8")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::case::fixtures::{bus, chain3, gen, line};
    use crate::case::Load;
    use crate::montecarlo::StopReason;
    use num_complex::Complex64;

    /// Slack 1 with PV 2, 3, 4 around a ring; bus 5 is radial off bus 4.
    fn grid() -> NetworkCase {
        let mut buses = vec![bus(1, BusKind::Slack)];
        for id in 2..=4 {
            buses.push(bus(id, BusKind::PV));
        }
        buses.push(bus(5, BusKind::PQ));
        NetworkCase {
            name: "grid".into(),
            base_mva: 100.0,
            buses,
            loads: vec![
                Load { bus: 2, p_nom: 0.9, q_nom: 0.3 },
                Load { bus: 3, p_nom: 0.8, q_nom: 0.2 },
                Load { bus: 5, p_nom: 0.5, q_nom: 0.1 },
            ],
            generators: vec![gen(1, 0.0, 1.0), gen(2, 0.3, 1.0), gen(3, 0.3, 1.0), gen(4, 0.5, 1.0), gen(3, 0.0, 1.0)],
            branches: vec![
                line(1, 2, 0.01, 0.1),
                line(2, 3, 0.01, 0.1),
                line(3, 4, 0.01, 0.1),
                line(4, 1, 0.01, 0.1),
                line(4, 5, 0.01, 0.1),
            ],
        }
    }

    fn solved(case: &NetworkCase) -> PFSolution {
        let sol = robust_solve(case, None, &SolverOptions::default());
        assert!(sol.converged);
        sol
    }

    #[test]
    fn generators_rank_by_dispatch_with_slack_from_the_solution() {
        let case = grid();
        let sol = solved(&case);
        let r = rank_generators(&case, &sol);
        let buses: Vec<usize> = r.iter().map(|g| g.bus).collect();
        // slack covers 2.2 load - 1.1 scheduled + losses
        assert_eq!(buses, vec![1, 4, 2, 3]);
        assert!(r[0].p > 1.1 && r[0].p < 1.2);
        // ties go to the lower bus id
        assert_eq!((r[2].p, r[3].p), (0.3, 0.3));

        let mut three = chain3();
        three.generators[1].p_set = 3.0;
        three.buses.push(bus(4, BusKind::PV));
        three.branches.push(line(3, 4, 0.01, 0.1));
        three.generators.push(gen(4, 5.0, 1.0));
        three.loads[0].p_nom = 9.0;
        let sol = robust_solve(&three, None, &SolverOptions { enforce_q_limits: false, ..Default::default() });
        let p: Vec<usize> = rank_generators(&three, &sol).iter().map(|g| g.bus).collect();
        assert_eq!(&p[..2], &[4, 2]);
    }

    #[test]
    fn branch_loading_matches_terminal_power() {
        let mut case = chain3();
        case.buses[1].kind = BusKind::PQ;
        case.generators.truncate(1);
        let sol = solved(&case);
        let r = rank_branches(&case, &sol, BranchLoading::FromMva);
        // radial chain feeding one sink: upstream carries the most
        assert_eq!(r[0].branch, BranchRef { from: 1, to: 2, ordinal: 0 });
        // independent oracle: I_from = (V_f - V_t) / z for plain lines
        let v: Vec<Complex64> = (0..3).map(|k| sol.state.voltage(k)).collect();
        for rank in &r {
            let (f, t) = (rank.branch.from - 1, rank.branch.to - 1);
            let br = &case.branches[case.find_branch(&rank.branch).unwrap()];
            let i = (v[f] - v[t]) / Complex64::new(br.r, br.x);
            assert!((rank.loading - (v[f] * i.conj()).norm()).abs() < 1e-10);
        }
        // out-of-service branches are excluded
        let mut g = grid();
        g.branches[1].in_service = false;
        let sol = solved(&g);
        let r = rank_branches(&g, &sol, BranchLoading::MaxMva);
        assert_eq!(r.len(), 4);
        assert!(r.iter().all(|b| b.branch != BranchRef { from: 2, to: 3, ordinal: 0 }));
        assert!(r.windows(2).all(|w| w[0].loading >= w[1].loading));
    }

    #[test]
    fn percent_of_rating_puts_unrated_branches_last() {
        let mut case = grid();
        case.branches[4].rate_a = 0.6;
        let sol = solved(&case);
        let r = rank_branches(&case, &sol, BranchLoading::PercentOfRating);
        assert_eq!(r[0].branch, BranchRef { from: 4, to: 5, ordinal: 0 });
        assert!(r[1..].iter().all(|b| b.loading == f64::NEG_INFINITY));
        // ties among unrated branches fall back to (from, to)
        assert!(r[1..].windows(2).all(|w| w[0].branch < w[1].branch));
    }

    #[test]
    fn enumeration_order_dedup_and_truncation() {
        let case = grid();
        let sol = solved(&case);
        assert!(enumerate(&case, &sol, &ContingencySpec::default()).sets.is_empty());

        let spec = ContingencySpec { n1_generators: 2, n2_generators: 2, n1_branches: 1, ..Default::default() };
        let e = enumerate(&case, &sol, &spec);
        let labels: Vec<String> = e.sets.iter().map(|s| s.to_string()).collect();
        let top = rank_branches(&case, &sol, BranchLoading::FromMva);
        // {G1, G4} is listed once, under G1
        assert_eq!(labels, ["G1", "G4", "G1 G4", "G1 G2", "G4 G2", &format!("B{}", top[0].branch)]);
        assert!(e.warnings.is_empty());

        let spec = ContingencySpec {
            n1_generators: 9,
            n2_gen_branch: (1, 2),
            explicit: vec![format!("B{} G1", top[1].branch).parse().unwrap(), "G3".parse().unwrap(), "B2-3".parse().unwrap()],
            ..Default::default()
        };
        let e = enumerate(&case, &sol, &spec);
        // 4 generators (truncated from 9), 2 pairs; explicit duplicates dropped
        let labels: Vec<String> = e.sets.iter().map(|s| s.to_string()).collect();
        let pair = |k: usize| format!("G1 B{}", top[k].branch);
        let mut expect = vec!["G1".to_string(), "G4".into(), "G2".into(), "G3".into(), pair(0), pair(1)];
        if !expect.contains(&"B2-3".to_string()) {
            expect.push("B2-3".into());
        }
        assert_eq!(labels, expect);
        assert_eq!(e.warnings.len(), 1);
        assert_eq!(e, enumerate(&case, &sol, &spec));
    }

    #[test]
    fn labels_round_trip() {
        for s in ["G132", "B130-131 B131-144", "G2067 B12854-6522#2"] {
            let set: OutageSet = s.parse().unwrap();
            let label = format!("C3: {set}");
            assert_eq!(parse_label(&label), Some((3, set)));
        }
        assert_eq!("G1;B1-2".parse::<OutageSet>().unwrap().to_string(), "G1 B1-2");
        assert!("".parse::<OutageSet>().is_err());
        assert_eq!(parse_label("C1 G1"), None);
    }

    #[test]
    fn seeds_depend_only_on_seed_and_ordinal() {
        assert_eq!(contingency_seed(5, 3), contingency_seed(5, 3));
        let seeds: HashSet<u64> = (0..100).map(|i| contingency_seed(5, i)).collect();
        assert_eq!(seeds.len(), 100);
        assert_ne!(contingency_seed(5, 1), contingency_seed(6, 1));
    }

    fn study(spec: &ContingencySpec) -> ContingencyStudy {
        let cfg = StudyConfig { max_samples: 100, seed: 9, workers: 2, ..Default::default() };
        run_contingency_study(&grid(), spec, &UncertaintySpec::normal(2.0), &cfg, &SolverOptions::default(), &LimitSpec::default())
            .unwrap()
    }

    #[test]
    fn infeasible_contingencies_get_degenerate_reports() {
        let case = grid();
        let before = case.clone();
        let spec = ContingencySpec {
            explicit: vec!["B4-5".parse().unwrap(), "G1".parse().unwrap(), "B1-2".parse().unwrap()],
            ..Default::default()
        };
        let s = study(&spec);
        assert_eq!(case, before);
        assert_eq!(s.results.len(), 3);
        let islanded = &s.results[0];
        assert!(!islanded.base_feasible);
        assert_eq!(islanded.report.n, 0);
        assert_eq!(islanded.report.stop_reason, StopReason::BaseCaseInfeasible);
        assert_eq!(islanded.report.estimate(ClassKind::VoltageCollapse).p_hat, 1.0);
        assert!(islanded.report.base_case.diagnostic.as_ref().unwrap().contains("splits"));
        assert!(s.results[2].base_feasible);
        assert_eq!(s.results[2].report.n, 100);
        for r in &s.results {
            assert_eq!(parse_label(&r.label).unwrap(), (r.ordinal, r.outages.clone()));
            assert_eq!(r.report.config.seed, r.seed);
        }

        let mut csv = Vec::new();
        s.write_csv(&mut csv).unwrap();
        let csv = String::from_utf8(csv).unwrap();
        assert_eq!(csv.lines().count(), 1 + 1 + 3);
        assert!(csv.lines().nth(1).unwrap().starts_with("C0: base,9,true,100,"));
        assert!(s.text().contains("infeasible"));
    }

    #[test]
    fn parallel_contingencies_give_identical_results() {
        let spec = ContingencySpec { n1_generators: 3, include_base: false, ..Default::default() };
        let a = study(&spec);
        let b = study(&ContingencySpec { parallel_contingencies: true, ..spec });
        assert_eq!(a.to_json(), b.to_json());
        assert!(a.base.is_none());
    }

    #[test]
    fn unknown_explicit_outages_are_rejected() {
        let cfg = StudyConfig { max_samples: 100, ..Default::default() };
        let spec = ContingencySpec { explicit: vec!["G5".parse().unwrap()], ..Default::default() };
        let err = run_contingency_study(&grid(), &spec, &UncertaintySpec::normal(1.0), &cfg, &SolverOptions::default(), &LimitSpec::default());
        assert!(matches!(err, Err(ContingencyError::Spec(_))));
        let infeasible = grid().scale_loads(50.0);
        let err = run_contingency_study(&infeasible, &ContingencySpec::default(), &UncertaintySpec::normal(1.0), &cfg, &SolverOptions::default(), &LimitSpec::default());
        assert!(matches!(err, Err(ContingencyError::BaseInfeasible(_))));
    }
}
